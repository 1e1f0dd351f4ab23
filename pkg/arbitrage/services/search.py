"""
Derivative-free search for dynamic arbitrage over piecewise-constant round trips.

Nelder-Mead runs over (rates of the first n-1 blocks, all n durations); the
last rate is eliminated by the closure constraint. Starts are drawn from a
seeded Philox stream, one start per row, so a search is reproducible from
its seed whatever the number of threads.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import optimize

from impact.services.simulator import make_generator, stream

from ..exceptions import InfeasibleBoundsError, StrategyError
from .round_trip import ALMGREN_CHRISS, ImpactRegime, RoundTripStrategy, expected_round_trip_pnl

logger = logging.getLogger(__name__)

PENALTY = 1e3


@dataclass(frozen=True)
class SearchBounds:
    """Bounds on |rate| and on block durations."""
    rate_min: float
    rate_max: float
    duration_min: float
    duration_max: float

    def __post_init__(self):
        if not 0 <= self.rate_min < self.rate_max:
            raise InfeasibleBoundsError(
                f"rate bounds must satisfy 0 <= rate_min < rate_max, got [{self.rate_min}, {self.rate_max}]"
            )
        if not 0 < self.duration_min <= self.duration_max:
            raise InfeasibleBoundsError(
                "duration bounds must satisfy 0 < duration_min <= duration_max, "
                f"got [{self.duration_min}, {self.duration_max}]"
            )
        if not np.isfinite(self.rate_max) or not np.isfinite(self.duration_max):
            raise InfeasibleBoundsError("search bounds must be finite")


@dataclass(frozen=True)
class StartResult:
    start_id: int
    pnl: float
    evaluations: int
    converged: bool
    strategy: Optional[RoundTripStrategy] = None


@dataclass(frozen=True)
class SearchResult:
    best: Optional[RoundTripStrategy]
    pnl: float
    evaluations: int
    starts: Tuple[StartResult, ...] = field(default_factory=tuple)


class _BudgetExhausted(Exception):
    pass


class _Objective:
    """Negative expected PnL plus a penalty for rate-bound violations; tracks the best feasible point."""

    def __init__(self, regime: ImpactRegime, n_blocks: int, bounds: SearchBounds, limit: int):
        self.regime = regime
        self.n_blocks = n_blocks
        self.bounds = bounds
        self.limit = limit
        self.evaluations = 0
        self.best_pnl = -np.inf
        self.best_strategy = None

    def decode(self, x) -> Tuple[RoundTripStrategy, float]:
        n = self.n_blocks
        b = self.bounds
        rates = np.clip(x[:n - 1], -b.rate_max, b.rate_max)
        durations = np.clip(x[n - 1:], b.duration_min, b.duration_max)
        strategy = RoundTripStrategy.closed(durations, rates)
        magnitudes = np.abs(np.array(strategy.rates))
        violation = float(
            np.sum(np.maximum(0.0, b.rate_min - magnitudes))
            + np.sum(np.maximum(0.0, magnitudes - b.rate_max))
        )
        return strategy, violation

    def __call__(self, x) -> float:
        if self.evaluations >= self.limit:
            raise _BudgetExhausted
        self.evaluations += 1
        strategy, violation = self.decode(x)
        pnl = expected_round_trip_pnl(self.regime, strategy)
        if violation == 0 and pnl > self.best_pnl:
            self.best_pnl = pnl
            self.best_strategy = strategy
        return -pnl + PENALTY * violation


def _starting_points(n_blocks: int, bounds: SearchBounds, n_starts: int, seed: int) -> np.ndarray:
    """Seeded starts, with the last duration nudged so the closing rate is within bounds."""
    rng = make_generator(stream(seed, n_blocks))
    rates = rng.uniform(bounds.rate_min, bounds.rate_max, size=(n_starts, n_blocks - 1))
    rates *= rng.choice([-1.0, 1.0], size=rates.shape)
    durations = rng.uniform(bounds.duration_min, bounds.duration_max, size=(n_starts, n_blocks))
    for row in range(n_starts):
        traded = abs(float(np.dot(rates[row], durations[row, :-1])))
        if traded == 0:
            continue
        shortest = traded / bounds.rate_max
        longest = traded / bounds.rate_min if bounds.rate_min > 0 else np.inf
        last = np.clip(durations[row, -1], shortest, longest)
        durations[row, -1] = np.clip(last, bounds.duration_min, bounds.duration_max)
    return np.hstack((rates, durations))


def search_arbitrage(
    regime: ImpactRegime,
    n_blocks: int,
    bounds: SearchBounds,
    budget: int,
    seed: int = 0,
    n_starts: int = 5,
    threads: int = 1,
) -> SearchResult:
    """
    Maximize the expected round-trip PnL over ``n_blocks`` constant-rate blocks.

    ``budget`` caps the total number of PnL evaluations; each of the
    ``n_starts`` Nelder-Mead runs gets ``budget // n_starts``.
    """
    if n_blocks < 2:
        raise StrategyError(f"a round trip search needs at least 2 blocks, got {n_blocks}")
    if n_starts < 1:
        raise InfeasibleBoundsError(f"n_starts must be at least 1, got {n_starts}")
    dimension = 2 * n_blocks - 1
    per_start = budget // n_starts
    if per_start < dimension + 1:
        raise InfeasibleBoundsError(
            f"budget {budget} leaves {per_start} evaluations per start; "
            f"Nelder-Mead needs at least {dimension + 1} in dimension {dimension}"
        )

    starts = _starting_points(n_blocks, bounds, n_starts, seed)
    lower = np.concatenate((np.full(n_blocks - 1, -bounds.rate_max), np.full(n_blocks, bounds.duration_min)))
    upper = np.concatenate((np.full(n_blocks - 1, bounds.rate_max), np.full(n_blocks, bounds.duration_max)))
    logger.info(
        f"Searching {regime.kind} round trips: {n_blocks} blocks, {n_starts} starts, "
        f"budget {budget}, seed {seed}"
    )

    def run_start(start_id: int) -> StartResult:
        objective = _Objective(regime, n_blocks, bounds, per_start)
        converged = False
        try:
            result = optimize.minimize(
                objective,
                starts[start_id],
                method='Nelder-Mead',
                bounds=list(zip(lower, upper)),
                options={'maxfev': per_start, 'xatol': 1e-10, 'fatol': 1e-12, 'adaptive': True},
            )
            converged = bool(result.success)
        except _BudgetExhausted:
            pass
        logger.debug(f"Start {start_id}: best PnL {objective.best_pnl!r} after {objective.evaluations} evaluations")
        return StartResult(
            start_id=start_id,
            pnl=float(objective.best_pnl),
            evaluations=objective.evaluations,
            converged=converged,
            strategy=objective.best_strategy,
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results: List[StartResult] = list(pool.map(run_start, range(n_starts)))

    best = max(results, key=lambda r: (r.pnl, -r.start_id))
    if best.strategy is None:
        logger.warning("No start reached a strategy within the rate bounds")
    return SearchResult(
        best=best.strategy,
        pnl=best.pnl,
        evaluations=sum(r.evaluations for r in results),
        starts=tuple(results),
    )


def _two_block_pnl(regime: ImpactRegime, slow_rate, slow_duration, fast_rate):
    volume = slow_rate * slow_duration
    gamma = regime.velocity.gamma
    return regime.velocity.kv * volume ** 2 * (slow_rate ** (gamma - 1) - fast_rate ** (gamma - 1)) / 2.0


def two_block_optimum(regime: ImpactRegime, bounds: SearchBounds, resolution: int = 401) -> Tuple[float, RoundTripStrategy]:
    """
    Best expected PnL of the two-block family under Almgren-Chriss k(v) with h = 0.

    Buy Q at rate a, then sell Q at rate b: PnL = kv Q^2 (a^(gamma-1) - b^(gamma-1)) / 2.
    For fixed (a, Q) the PnL is monotone in b, so b sits at one end of its
    feasible range; (a, first duration) is scanned on a grid and polished.
    """
    if regime.kind != ALMGREN_CHRISS or regime.instantaneous.eta != 0:
        raise StrategyError("the two-block optimum is defined for Almgren-Chriss impact with h = 0")

    def evaluate(a, d1):
        volume = a * d1
        fast_low = np.maximum(bounds.rate_min, volume / bounds.duration_max)
        fast_high = np.minimum(bounds.rate_max, volume / bounds.duration_min)
        feasible = (fast_low <= fast_high) & (fast_high > 0) & (a >= bounds.rate_min) & (a > 0)
        with np.errstate(divide='ignore', invalid='ignore'):
            low = _two_block_pnl(regime, a, d1, np.where(fast_low > 0, fast_low, np.nan))
            high = _two_block_pnl(regime, a, d1, fast_high)
        pnl = np.fmax(low, high)
        best_fast = np.where(np.fmax(low, high) == high, fast_high, fast_low)
        return np.where(feasible, pnl, -np.inf), best_fast

    rates = np.linspace(max(bounds.rate_min, bounds.rate_max * 1e-6), bounds.rate_max, resolution)
    durations = np.linspace(bounds.duration_min, bounds.duration_max, resolution)
    grid_a, grid_d = np.meshgrid(rates, durations, indexing='ij')
    values, _ = evaluate(grid_a, grid_d)
    i, j = np.unravel_index(np.argmax(values), values.shape)

    def negative(x):
        a = np.clip(x[0], rates[0], bounds.rate_max)
        d1 = np.clip(x[1], bounds.duration_min, bounds.duration_max)
        value, _ = evaluate(np.array(a), np.array(d1))
        return -float(value) if np.isfinite(value) else np.inf

    polished = optimize.minimize(
        negative,
        [grid_a[i, j], grid_d[i, j]],
        method='Nelder-Mead',
        bounds=[(rates[0], bounds.rate_max), (bounds.duration_min, bounds.duration_max)],
        options={'xatol': 1e-12, 'fatol': 1e-14, 'maxiter': 2000},
    )
    a, d1 = polished.x if -polished.fun >= values[i, j] else (grid_a[i, j], grid_d[i, j])
    pnl, fast = evaluate(np.array(a), np.array(d1))
    fast = float(fast)
    strategy = RoundTripStrategy.closed((float(d1), float(a * d1 / fast)), (-float(a),))
    return float(pnl), strategy
