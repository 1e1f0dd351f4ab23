"""
Path simulation of (q_t, S_t, X_t) and Monte Carlo ensembles.

Random streams: path ``i`` of an ensemble started from ``base_seed`` draws
its Brownian increments from ``Philox(SeedSequence(base_seed, spawn_key=(i,)))``.
A path therefore depends only on (base_seed, i): the ensemble statistics do
not depend on chunking, evaluation order or the number of threads.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings
from scipy import stats

from ..exceptions import ImpactModelError, TrajectoryError
from .model import (
    F_cumulative,
    H_integral,
    ModelParams,
    Trajectory,
    error_covariance,
)

logger = logging.getLogger(__name__)

CASH_TRAPEZOID = 'trapezoid'
CASH_EXACT = 'exact'
CASH_SCHEMES = (CASH_TRAPEZOID, CASH_EXACT)

OBSERVABLES = (
    'cash_change',
    'price_shift',
    'terminal_cash',
    'terminal_price',
    'cost',
    'martingale',
    'eps1',
    'eps2',
)
DEFAULT_OBSERVABLES = ('cash_change', 'price_shift', 'cost', 'martingale')

Seed = Union[int, np.random.SeedSequence]


def stream(base_seed: int, *key: int) -> np.random.SeedSequence:
    """Independent child stream ``key`` of ``base_seed``."""
    return np.random.SeedSequence(base_seed, spawn_key=tuple(key))


def path_seed(base_seed: int, index: int) -> np.random.SeedSequence:
    return stream(base_seed, index)


def make_generator(seed: Seed) -> np.random.Generator:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class GridConfig:
    """
    Time grid on [0, T'] with T' = T + delta, T always a grid point.

    ``n_steps`` are split between [0, T] and [T, T'] in proportion to their
    lengths (at least one step each when delta > 0), uniform within each part.
    """
    n_steps: int
    T: float
    delta: float = 0.0
    cash_scheme: str = CASH_TRAPEZOID

    def __post_init__(self):
        if self.n_steps < 1:
            raise ImpactModelError(f"n_steps must be at least 1, got {self.n_steps}")
        if not self.T > 0:
            raise ImpactModelError(f"T must be positive, got {self.T}")
        if not self.delta >= 0:
            raise ImpactModelError(f"delta must be non-negative, got {self.delta}")
        if self.delta > 0 and self.n_steps < 2:
            raise ImpactModelError("a positive delta needs at least two steps")
        if self.cash_scheme not in CASH_SCHEMES:
            raise ImpactModelError(f"unknown cash scheme {self.cash_scheme!r}")

    @property
    def T_prime(self) -> float:
        return self.T + self.delta

    @property
    def execution_steps(self) -> int:
        if self.delta == 0:
            return self.n_steps
        share = round(self.n_steps * self.T / self.T_prime)
        return min(max(share, 1), self.n_steps - 1)

    def times(self) -> np.ndarray:
        n_exec = self.execution_steps
        execution = np.linspace(0.0, self.T, n_exec + 1)
        if self.delta == 0:
            return execution
        post_trade = np.linspace(self.T, self.T_prime, self.n_steps - n_exec + 1)[1:]
        return np.concatenate((execution, post_trade))


@dataclass(frozen=True)
class SimulatedPath:
    times: np.ndarray
    q: np.ndarray
    S: np.ndarray
    X: np.ndarray
    S_T_prime: float
    X_T: float
    cost: float
    seed: Seed


@dataclass
class EnsembleStats:
    n_paths: int
    observables: Tuple[str, ...]
    mean: Dict[str, float]
    stderr: Dict[str, float]
    kurtosis: Dict[str, float]
    covariance: np.ndarray = field(repr=False)

    def cov(self, first: str, second: str) -> float:
        i = self.observables.index(first)
        j = self.observables.index(second)
        return float(self.covariance[i, j])

    def rows(self) -> List[dict]:
        return [
            {
                'observable': name,
                'mean': self.mean[name],
                'stderr': self.stderr[name],
                'n': self.n_paths,
            }
            for name in self.observables
        ]


@dataclass
class CovarianceReport:
    n_paths: int
    delta: float
    alpha: float
    empirical: np.ndarray
    theoretical: np.ndarray

    @property
    def relative_error(self) -> np.ndarray:
        theoretical = np.abs(self.theoretical)
        difference = np.abs(self.empirical - self.theoretical)
        return np.divide(difference, theoretical, out=difference.copy(), where=theoretical > 0)

    def within_tolerance(self, diagonal_relative=0.05, off_diagonal_absolute=0.01) -> bool:
        relative = self.relative_error
        off_diagonal = abs(self.empirical[0, 1] - self.theoretical[0, 1])
        return bool(
            relative[0, 0] <= diagonal_relative
            and relative[1, 1] <= diagonal_relative
            and off_diagonal <= off_diagonal_absolute
        )

    def rows(self) -> List[dict]:
        entries = (('var_eps1', 0, 0), ('cov_eps1_eps2', 0, 1), ('var_eps2', 1, 1))
        relative = self.relative_error
        return [
            {
                'delta': self.delta,
                'entry': name,
                'empirical': float(self.empirical[i, j]),
                'theoretical': float(self.theoretical[i, j]),
                'relative_error': float(relative[i, j]),
                'n': self.n_paths,
            }
            for name, i, j in entries
        ]


def _check_grid(traj: Trajectory, g: GridConfig):
    if abs(g.T - traj.T) > 1e-12 * traj.T:
        raise TrajectoryError(f"grid horizon {g.T} does not match trajectory horizon {traj.T}")


def _brownian_increments(seeds: Sequence[Seed], dt: np.ndarray) -> np.ndarray:
    scale = np.sqrt(dt)
    increments = np.empty((len(seeds), dt.size))
    for row, seed in enumerate(seeds):
        increments[row] = make_generator(seed).standard_normal(dt.size) * scale
    return increments


def _simulate_batch(m: ModelParams, traj: Trajectory, g: GridConfig, dW: np.ndarray) -> dict:
    """Vectorized dynamics for one batch of paths (one row of dW per path)."""
    p = m.permanent
    times = g.times()
    q = traj.q_at(times)
    y = traj.q0 - q
    sold = -np.diff(q)

    W = np.zeros((dW.shape[0], times.size))
    W[:, 1:] = np.cumsum(dW, axis=1)
    # exact permanent drift: int_0^t f(|q0 - q_s|) v_s ds = F(q0 - q_t)
    S = m.S0 - np.asarray(F_cumulative(p, y))[None, :] + m.sigma * W

    running_cost = traj.cumulative_cost(m.instantaneous, times)
    if g.cash_scheme == CASH_TRAPEZOID:
        proceeds = 0.5 * (S[:, :-1] + S[:, 1:]) * sold
    else:
        deterministic = m.S0 * sold - np.diff(np.asarray(H_integral(p, y)))
        proceeds = deterministic[None, :] + m.sigma * 0.5 * (W[:, :-1] + W[:, 1:]) * sold

    X = np.full_like(S, m.X0)
    X[:, 1:] += np.cumsum(proceeds - np.diff(running_cost)[None, :], axis=1)

    q_mid = 0.5 * (q[:-1] + q[1:])
    return {
        'times': times,
        'q': q,
        'S': S,
        'X': X,
        'cost': float(running_cost[-1]),
        'martingale': ((traj.qT - q_mid)[None, :] * dW).sum(axis=1),
    }


def _observables(m: ModelParams, traj: Trajectory, batch: dict) -> Dict[str, np.ndarray]:
    p = m.permanent
    terminal_price = batch['S'][:, -1]
    terminal_cash = batch['X'][:, -1]
    cost = np.full(terminal_price.shape, batch['cost'])
    price_shift = terminal_price - m.S0
    cash_change = terminal_cash - m.X0
    values = {
        'cash_change': cash_change,
        'price_shift': price_shift,
        'terminal_cash': terminal_cash,
        'terminal_price': terminal_price,
        'cost': cost,
        'martingale': batch['martingale'],
        'eps1': price_shift + F_cumulative(p, traj.q0),
    }
    if traj.q0 != 0:
        values['eps2'] = (
            (terminal_price + p.alpha * m.S0) / (1.0 + p.alpha)
            - cash_change / traj.q0
            - cost / traj.q0
        )
    else:
        values['eps2'] = np.full(terminal_price.shape, np.nan)
    return values


def simulate_path(m: ModelParams, traj: Trajectory, g: GridConfig, seed: Seed) -> SimulatedPath:
    """One realization of (q, S, X) on the grid; deterministic for a fixed seed."""
    _check_grid(traj, g)
    dt = np.diff(g.times())
    batch = _simulate_batch(m, traj, g, _brownian_increments([seed], dt))
    return SimulatedPath(
        times=batch['times'],
        q=batch['q'],
        S=batch['S'][0],
        X=batch['X'][0],
        S_T_prime=float(batch['S'][0, -1]),
        X_T=float(batch['X'][0, -1]),
        cost=batch['cost'],
        seed=seed,
    )


def _ensemble_samples(m, traj, g, n_paths, base_seed, threads=1, chunk_size=None) -> Dict[str, np.ndarray]:
    _check_grid(traj, g)
    if n_paths < 2:
        raise ImpactModelError(f"an ensemble needs at least 2 paths, got {n_paths}")
    chunk_size = chunk_size or settings.IMPACTLAB['CHUNK_SIZE']
    dt = np.diff(g.times())
    samples = {name: np.empty(n_paths) for name in OBSERVABLES}
    bounds = [(start, min(start + chunk_size, n_paths)) for start in range(0, n_paths, chunk_size)]

    def run_chunk(chunk):
        start, stop = chunk
        seeds = [path_seed(base_seed, i) for i in range(start, stop)]
        batch = _simulate_batch(m, traj, g, _brownian_increments(seeds, dt))
        for name, values in _observables(m, traj, batch).items():
            samples[name][start:stop] = values
        logger.debug(f"Simulated paths {start}..{stop - 1}")

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        list(pool.map(run_chunk, bounds))
    return samples


def _summarize(samples: Dict[str, np.ndarray], observables: Sequence[str]) -> EnsembleStats:
    n_paths = len(next(iter(samples.values())))
    matrix = np.column_stack([samples[name] for name in observables])
    # numpy's pairwise summation keeps the means order-insensitive
    means = matrix.mean(axis=0)
    stds = matrix.std(axis=0, ddof=1)
    kurtosis = {}
    for index, name in enumerate(observables):
        if stds[index] > 0:
            kurtosis[name] = float(stats.kurtosis(matrix[:, index], fisher=False))
        else:
            kurtosis[name] = float('nan')
    return EnsembleStats(
        n_paths=n_paths,
        observables=tuple(observables),
        mean={name: float(means[i]) for i, name in enumerate(observables)},
        stderr={name: float(stds[i] / np.sqrt(n_paths)) for i, name in enumerate(observables)},
        kurtosis=kurtosis,
        covariance=np.atleast_2d(np.cov(matrix, rowvar=False)),
    )


def run_ensemble(
    m: ModelParams,
    traj: Trajectory,
    g: GridConfig,
    n_paths: int,
    base_seed: int,
    observables: Sequence[str] = DEFAULT_OBSERVABLES,
    threads: int = 1,
    chunk_size: Optional[int] = None,
) -> EnsembleStats:
    unknown = sorted(set(observables) - set(OBSERVABLES))
    if unknown:
        raise ImpactModelError(f"unknown observables: {', '.join(unknown)}")
    logger.info(f"Running ensemble of {n_paths} paths (base_seed={base_seed}, threads={threads})")
    samples = _ensemble_samples(m, traj, g, n_paths, base_seed, threads, chunk_size)
    return _summarize(samples, observables)


def verify_covariance(
    m: ModelParams,
    alpha: float,
    traj: Trajectory,
    g: GridConfig,
    n_paths: int,
    base_seed: int,
    threads: int = 1,
) -> CovarianceReport:
    """Empirical covariance of (eps1, eps2) next to the closed-form matrix."""
    p = m.permanent
    if not p.is_power_law:
        raise ImpactModelError("covariance verification requires the power-law density (A = 0)")
    if not traj.is_liquidation or traj.q0 == 0:
        raise TrajectoryError("covariance verification requires a liquidation with q0 != 0")

    samples = _ensemble_samples(m, traj, g, n_paths, base_seed, threads)
    q0 = traj.q0
    eps1 = samples['price_shift'] + p.k * np.sign(q0) * abs(q0) ** p.alpha
    eps2 = (
        (samples['terminal_price'] + alpha * m.S0) / (1.0 + alpha)
        - samples['cash_change'] / q0
        - samples['cost'] / q0
    )
    empirical = np.cov(np.vstack((eps1, eps2)))
    theoretical = error_covariance(traj, alpha, m.sigma, g.delta)
    report = CovarianceReport(n_paths, g.delta, alpha, empirical, theoretical)
    logger.info(
        f"Covariance check delta={g.delta}: empirical var(eps1)={empirical[0, 0]:.6f} "
        f"vs {theoretical[0, 0]:.6f}, var(eps2)={empirical[1, 1]:.6f} vs {theoretical[1, 1]:.6f}"
    )
    return report


def covariance_sensitivity(
    m: ModelParams,
    traj: Trajectory,
    g: GridConfig,
    deltas: Sequence[float],
    n_paths: int,
    base_seed: int,
    threads: int = 1,
) -> List[CovarianceReport]:
    """verify_covariance repeated over observation lags, same random streams."""
    return [
        verify_covariance(m, m.permanent.alpha, traj, replace(g, delta=float(delta)), n_paths, base_seed, threads)
        for delta in deltas
    ]
