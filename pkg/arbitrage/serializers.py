from rest_framework import serializers

from impact.exceptions import ImpactModelError
from impact.serializers import ExperimentConfigSerializer, FiniteFloatField, StrictSerializer
from impact.services.model import InstantaneousImpact, PermanentImpact, VelocityImpact

from .exceptions import InfeasibleBoundsError
from .services.round_trip import ALMGREN_CHRISS, CUMULATIVE_VOLUME, ImpactRegime
from .services.search import SearchBounds


class RegimeSerializer(StrictSerializer):
    """
    {kind: almgren_chriss, kv, gamma} or {kind: cumulative_volume, k, alpha, A};
    eta and beta set the instantaneous cost in both cases.
    """
    kind = serializers.ChoiceField(choices=[ALMGREN_CHRISS, CUMULATIVE_VOLUME])
    kv = FiniteFloatField(required=False)
    gamma = FiniteFloatField(required=False)
    k = FiniteFloatField(required=False)
    alpha = FiniteFloatField(required=False)
    A = FiniteFloatField(default=0.0)
    eta = FiniteFloatField(default=0.0)
    beta = FiniteFloatField(default=1.0)

    def validate(self, attrs):
        needed = ('kv', 'gamma') if attrs['kind'] == ALMGREN_CHRISS else ('k', 'alpha')
        missing = [key for key in needed if key not in attrs]
        if missing:
            raise serializers.ValidationError({key: ['This field is required.'] for key in missing})
        try:
            build_regime(attrs)
        except ImpactModelError as e:
            raise serializers.ValidationError(str(e))
        return attrs


def build_regime(attrs) -> ImpactRegime:
    instantaneous = InstantaneousImpact(eta=attrs['eta'], beta=attrs['beta'])
    if attrs['kind'] == ALMGREN_CHRISS:
        return ImpactRegime.almgren_chriss(VelocityImpact(kv=attrs['kv'], gamma=attrs['gamma']), instantaneous)
    permanent = PermanentImpact(k=attrs['k'], alpha=attrs['alpha'], A=attrs['A'])
    return ImpactRegime.cumulative_volume(permanent, instantaneous)


class SearchSerializer(StrictSerializer):
    n_blocks = serializers.IntegerField(min_value=2)
    budget = serializers.IntegerField(min_value=1)
    n_starts = serializers.IntegerField(min_value=1, default=5)
    rate_min = FiniteFloatField(min_value=0.0)
    rate_max = FiniteFloatField()
    duration_min = FiniteFloatField()
    duration_max = FiniteFloatField()

    def validate(self, attrs):
        try:
            build_bounds(attrs)
        except InfeasibleBoundsError as e:
            raise serializers.ValidationError(str(e))
        per_start = attrs['budget'] // attrs['n_starts']
        needed = 2 * attrs['n_blocks']
        if per_start < needed:
            raise serializers.ValidationError(
                {'budget': [f'At least {needed} evaluations per start are needed, got {per_start}.']}
            )
        return attrs


def build_bounds(attrs) -> SearchBounds:
    return SearchBounds(
        rate_min=attrs['rate_min'],
        rate_max=attrs['rate_max'],
        duration_min=attrs['duration_min'],
        duration_max=attrs['duration_max'],
    )


class ArbitrageConfigSerializer(ExperimentConfigSerializer):
    regime = RegimeSerializer()
    search = SearchSerializer()
