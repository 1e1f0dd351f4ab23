"""
Expected PnL of round-trip strategies under the two permanent impact regimes.

Rates follow the toolkit convention v = -q'(t): positive rates sell,
negative rates buy.
"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from impact.services.model import (
    NO_EXECUTION_COST,
    InstantaneousImpact,
    PermanentImpact,
    Trajectory,
    VelocityImpact,
    execution_cost,
    permanent_cash_term,
)

from ..exceptions import StrategyError

CLOSURE_TOLERANCE = 1e-12

ALMGREN_CHRISS = 'almgren_chriss'
CUMULATIVE_VOLUME = 'cumulative_volume'


@dataclass(frozen=True)
class RoundTripStrategy:
    """Blocks of constant trading rate returning to the initial inventory."""
    durations: Tuple[float, ...]
    rates: Tuple[float, ...]

    def __post_init__(self):
        if len(self.durations) == 0 or len(self.durations) != len(self.rates):
            raise StrategyError("a strategy needs at least one block with one rate per duration")
        if any(not d > 0 for d in self.durations):
            raise StrategyError("block durations must be positive")
        traded = [v * d for v, d in zip(self.rates, self.durations)]
        scale = max(1.0, math.fsum(abs(x) for x in traded))
        residual = math.fsum(traded)
        if abs(residual) > CLOSURE_TOLERANCE * scale:
            raise StrategyError(f"strategy is not a round trip: net traded volume {residual!r}")

    @classmethod
    def closed(cls, durations: Sequence[float], leading_rates: Sequence[float]) -> 'RoundTripStrategy':
        """Build a strategy whose last rate is chosen so the inventory returns to its start."""
        durations = tuple(float(d) for d in durations)
        leading_rates = tuple(float(v) for v in leading_rates)
        if len(leading_rates) != len(durations) - 1:
            raise StrategyError("closed() takes one rate fewer than durations")
        if not durations[-1] > 0:
            raise StrategyError("block durations must be positive")
        traded = math.fsum(v * d for v, d in zip(leading_rates, durations))
        return cls(durations, leading_rates + (-traded / durations[-1],))

    @property
    def n_blocks(self) -> int:
        return len(self.durations)

    @property
    def horizon(self) -> float:
        return math.fsum(self.durations)

    def traded_before(self) -> np.ndarray:
        """q0 - q at the start of every block."""
        traded = np.array(self.rates) * np.array(self.durations)
        return np.concatenate(([0.0], np.cumsum(traded)[:-1]))

    def trajectory(self, q0: float = 0.0) -> Trajectory:
        times = np.concatenate(([0.0], np.cumsum(self.durations)))
        inventory = q0 - np.concatenate(([0.0], np.cumsum(np.array(self.rates) * np.array(self.durations))))
        # close exactly on the last knot
        inventory[-1] = q0
        return Trajectory.from_knots(times, inventory)

    def with_idle_prefix(self, duration: float) -> 'RoundTripStrategy':
        """Same strategy started ``duration`` later."""
        return RoundTripStrategy((float(duration),) + self.durations, (0.0,) + self.rates)

    def mirrored(self) -> 'RoundTripStrategy':
        """Every buy becomes a sell and vice versa."""
        return RoundTripStrategy(self.durations, tuple(-v for v in self.rates))


@dataclass(frozen=True)
class ImpactRegime:
    """Exactly one of ``velocity`` (Almgren-Chriss k(v)) or ``permanent`` (cumulative-volume f)."""
    instantaneous: InstantaneousImpact = NO_EXECUTION_COST
    velocity: Optional[VelocityImpact] = None
    permanent: Optional[PermanentImpact] = None

    def __post_init__(self):
        if (self.velocity is None) == (self.permanent is None):
            raise StrategyError("exactly one impact regime must be active")

    @classmethod
    def almgren_chriss(cls, velocity: VelocityImpact, instantaneous=NO_EXECUTION_COST) -> 'ImpactRegime':
        return cls(instantaneous=instantaneous, velocity=velocity)

    @classmethod
    def cumulative_volume(cls, permanent: PermanentImpact, instantaneous=NO_EXECUTION_COST) -> 'ImpactRegime':
        return cls(instantaneous=instantaneous, permanent=permanent)

    @property
    def kind(self) -> str:
        return ALMGREN_CHRISS if self.velocity is not None else CUMULATIVE_VOLUME


def expected_round_trip_pnl(regime: ImpactRegime, s: RoundTripStrategy) -> float:
    """E[X_T] - X0 of a closed strategy, in closed form block by block."""
    traj = s.trajectory()
    cost = execution_cost(regime.instantaneous, traj)
    if regime.kind == CUMULATIVE_VOLUME:
        return permanent_cash_term(regime.permanent, traj) - cost

    # int over a block of (q0 - q_t) k(v) dt with q0 - q_t = c + v (t - t_start)
    rates = np.array(s.rates)
    durations = np.array(s.durations)
    offsets = s.traded_before()
    blocks = regime.velocity.impact(rates) * (offsets * durations + rates * durations ** 2 / 2.0)
    return math.fsum(blocks) - cost
