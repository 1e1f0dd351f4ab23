from rest_framework import serializers

from impact.serializers import (
    MAX_SEED,
    ExperimentConfigSerializer,
    FiniteFloatField,
    ModelParamsSerializer,
    StrictSerializer,
)

from .exceptions import IdentificationError
from .services.metaorders import SCHEDULE_LINEAR, DatasetDesign


class MetaorderRowSerializer(StrictSerializer):
    """One metaorder CSV row, every value given as text."""
    id = serializers.IntegerField(min_value=0)
    q0 = FiniteFloatField()
    T = FiniteFloatField()
    delta = FiniteFloatField(min_value=0.0)
    S0 = FiniteFloatField()
    S_Tprime = FiniteFloatField()
    cash_change = FiniteFloatField()
    sigma = FiniteFloatField(min_value=0.0)
    schedule = serializers.ChoiceField(choices=[SCHEDULE_LINEAR])

    def validate_q0(self, value):
        if value == 0:
            raise serializers.ValidationError('Must be non-zero.')
        return value

    def validate_T(self, value):
        if not value > 0:
            raise serializers.ValidationError('Must be positive.')
        return value

    def validate_S0(self, value):
        if not value > 0:
            raise serializers.ValidationError('Must be positive.')
        return value


class DatasetSerializer(StrictSerializer):
    n_orders = serializers.IntegerField(min_value=1)
    q0_min = FiniteFloatField()
    q0_max = FiniteFloatField()
    T_min = FiniteFloatField()
    T_max = FiniteFloatField()
    delta = FiniteFloatField(min_value=0.0, default=0.0)
    n_steps = serializers.IntegerField(min_value=2, default=64)

    def validate(self, attrs):
        try:
            build_design(attrs)
        except IdentificationError as e:
            raise serializers.ValidationError(str(e))
        return attrs


def build_design(attrs) -> DatasetDesign:
    return DatasetDesign(**attrs)


class FitSerializer(StrictSerializer):
    """
    ``input`` is the metaorder CSV. ``alpha`` fixes the permanent exponent
    instead of estimating it; ``misspecified_alpha`` runs the second pipeline
    (null disables it).
    """
    input = serializers.CharField()
    alpha = FiniteFloatField(required=False, min_value=0.0, max_value=1.0)
    misspecified_alpha = FiniteFloatField(default=1.0, allow_null=True, min_value=0.0, max_value=1.0)

    def validate_alpha(self, value):
        if value == 0:
            raise serializers.ValidationError('Must be in (0, 1].')
        return value

    def validate_misspecified_alpha(self, value):
        if value == 0:
            raise serializers.ValidationError('Must be in (0, 1].')
        return value


class GenerateConfigSerializer(ExperimentConfigSerializer):
    model = ModelParamsSerializer()
    dataset = DatasetSerializer()


class EstimateConfigSerializer(ExperimentConfigSerializer):
    base_seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED, default=0)
    fit = FitSerializer()
