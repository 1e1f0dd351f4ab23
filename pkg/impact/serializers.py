import math

from rest_framework import serializers

from .exceptions import ImpactModelError
from .services.model import (
    InstantaneousImpact,
    ModelParams,
    PermanentImpact,
    Trajectory,
)
from .services.simulator import CASH_SCHEMES, DEFAULT_OBSERVABLES, OBSERVABLES, GridConfig

MAX_SEED = 2 ** 64 - 1


class FiniteFloatField(serializers.FloatField):
    """FloatField that rejects nan and infinities."""

    default_error_messages = {
        'not_finite': 'A finite number is required.',
    }

    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        if not math.isfinite(value):
            self.fail('not_finite')
        return value


class StrictSerializer(serializers.Serializer):
    """Serializer that rejects keys it does not declare."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown key.'] for key in unknown})
        return super().to_internal_value(data)


def flatten_errors(detail, prefix=''):
    """Turn nested DRF error details into 'dotted.key: message' lines."""
    if isinstance(detail, dict):
        lines = []
        for key, value in detail.items():
            path = f"{prefix}.{key}" if prefix else str(key)
            lines.extend(flatten_errors(value, path))
        return lines
    if isinstance(detail, list):
        if all(not isinstance(item, (dict, list)) for item in detail):
            return [f"{prefix or 'config'}: {' '.join(str(item) for item in detail)}"]
        lines = []
        for index, item in enumerate(detail):
            lines.extend(flatten_errors(item, f"{prefix}[{index}]"))
        return lines
    return [f"{prefix or 'config'}: {detail}"]


class ModelParamsSerializer(StrictSerializer):
    """Model parameters: permanent (k, alpha, A), instantaneous (eta, beta), sigma, S0, X0."""
    k = FiniteFloatField()
    alpha = FiniteFloatField()
    A = FiniteFloatField(default=0.0)
    eta = FiniteFloatField(default=0.0)
    beta = FiniteFloatField(default=1.0)
    sigma = FiniteFloatField(min_value=0.0)
    S0 = FiniteFloatField(default=100.0)
    X0 = FiniteFloatField(default=0.0)

    def validate(self, attrs):
        try:
            build_model_params(attrs)
        except ImpactModelError as e:
            raise serializers.ValidationError(str(e))
        return attrs


def build_model_params(attrs) -> ModelParams:
    return ModelParams(
        sigma=attrs['sigma'],
        S0=attrs['S0'],
        X0=attrs['X0'],
        permanent=PermanentImpact(k=attrs['k'], alpha=attrs['alpha'], A=attrs['A']),
        instantaneous=InstantaneousImpact(eta=attrs['eta'], beta=attrs['beta']),
    )


class TrajectorySerializer(StrictSerializer):
    """Either {kind: linear, q0, T} or {kind: knots, times: [...], inventory: [...]}."""
    kind = serializers.ChoiceField(choices=['linear', 'knots'])
    q0 = FiniteFloatField(required=False)
    T = FiniteFloatField(required=False)
    times = serializers.ListField(child=FiniteFloatField(), required=False, min_length=2)
    inventory = serializers.ListField(child=FiniteFloatField(), required=False, min_length=2)

    def validate(self, attrs):
        needed = ('q0', 'T') if attrs['kind'] == 'linear' else ('times', 'inventory')
        missing = [key for key in needed if key not in attrs]
        if missing:
            raise serializers.ValidationError({key: ['This field is required.'] for key in missing})
        try:
            build_trajectory(attrs)
        except ImpactModelError as e:
            raise serializers.ValidationError(str(e))
        return attrs


def build_trajectory(attrs) -> Trajectory:
    if attrs['kind'] == 'linear':
        return Trajectory.linear(attrs['q0'], attrs['T'])
    return Trajectory.from_knots(attrs['times'], attrs['inventory'])


class GridSerializer(StrictSerializer):
    n_steps = serializers.IntegerField(min_value=1)
    delta = FiniteFloatField(min_value=0.0, default=0.0)
    cash_scheme = serializers.ChoiceField(choices=list(CASH_SCHEMES), default=CASH_SCHEMES[0])

    def validate(self, attrs):
        if attrs['delta'] > 0 and attrs['n_steps'] < 2:
            raise serializers.ValidationError({'n_steps': ['A positive delta needs at least two steps.']})
        return attrs


def build_grid(attrs, T: float) -> GridConfig:
    return GridConfig(n_steps=attrs['n_steps'], T=T, delta=attrs['delta'], cash_scheme=attrs['cash_scheme'])


class EnsembleSerializer(StrictSerializer):
    n_paths = serializers.IntegerField(min_value=2)
    observables = serializers.ListField(
        child=serializers.ChoiceField(choices=list(OBSERVABLES)),
        default=list(DEFAULT_OBSERVABLES),
        min_length=1,
    )
    dump_paths = serializers.IntegerField(min_value=0, default=1)


class CovarianceSerializer(StrictSerializer):
    deltas = serializers.ListField(child=FiniteFloatField(min_value=0.0), default=list)


class ExperimentConfigSerializer(StrictSerializer):
    """Top-level keys shared by every subcommand."""
    base_seed = serializers.IntegerField(min_value=0, max_value=MAX_SEED)
    output_dir = serializers.CharField(required=False)


class SimulateConfigSerializer(ExperimentConfigSerializer):
    model = ModelParamsSerializer()
    trajectory = TrajectorySerializer()
    grid = GridSerializer()
    ensemble = EnsembleSerializer()


class VerifyCovarianceConfigSerializer(SimulateConfigSerializer):
    covariance = CovarianceSerializer(required=False)

    def validate(self, attrs):
        trajectory = build_trajectory(attrs['trajectory'])
        if not trajectory.is_liquidation or trajectory.q0 == 0:
            raise serializers.ValidationError({'trajectory': ['A liquidation with q0 != 0 is required.']})
        if attrs['model']['A'] != 0:
            raise serializers.ValidationError({'model': {'A': ['Covariance verification requires A = 0.']}})
        return attrs
