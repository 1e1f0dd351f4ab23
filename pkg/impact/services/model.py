"""
Closed-form layer of the nonlinear permanent market impact model.

Sign convention, shared by the whole toolkit: q_t is the inventory still
held and v_t = -q'(t) is the trading rate. A liquidation from q0 > 0 to
q_T = 0 is a sell (v_t > 0) and pushes the price down; q0 < 0 is a buy.
Slippage and cumulated instantaneous impact are positive for sells.
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import integrate

from ..exceptions import DomainError, ImpactModelError, QuadratureError, TrajectoryError

logger = logging.getLogger(__name__)

QUAD_TOLERANCE = 1e-10
CLOSURE_TOLERANCE = 1e-12

SCHEDULE_LINEAR = 'linear'
SCHEDULE_KNOTS = 'knots'


@dataclass(frozen=True)
class PermanentImpact:
    """Permanent impact density f(q) = k * alpha / (q + A) ** (1 - alpha) on q > 0."""
    k: float
    alpha: float
    A: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise ImpactModelError(f"k must be positive, got {self.k}")
        if not 0 < self.alpha <= 1:
            raise ImpactModelError(f"alpha must be in (0, 1], got {self.alpha}")
        if not self.A >= 0:
            raise ImpactModelError(f"A must be non-negative, got {self.A}")

    @property
    def is_power_law(self) -> bool:
        return self.A == 0


@dataclass(frozen=True)
class InstantaneousImpact:
    """Execution cost h(v) = eta * sgn(v) * |v| ** beta. eta = 0 means no cost."""
    eta: float
    beta: float = 1.0
    time_dependent: bool = False

    def __post_init__(self):
        if not self.eta >= 0:
            raise ImpactModelError(f"eta must be non-negative, got {self.eta}")
        if not 0 < self.beta <= 1:
            raise ImpactModelError(f"beta must be in (0, 1], got {self.beta}")
        if self.time_dependent:
            raise ImpactModelError("time-dependent execution costs are not supported")

    def h(self, v):
        v = np.asarray(v, dtype=float)
        return self.eta * np.sign(v) * np.abs(v) ** self.beta

    def cost_rate(self, v):
        """h(v) * v, always non-negative."""
        return self.eta * np.abs(np.asarray(v, dtype=float)) ** (1.0 + self.beta)


NO_EXECUTION_COST = InstantaneousImpact(eta=0.0)


@dataclass(frozen=True)
class VelocityImpact:
    """Almgren-Chriss permanent impact k(v) = kv * sgn(v) * |v| ** gamma."""
    kv: float
    gamma: float = 1.0

    def __post_init__(self):
        if not self.kv > 0:
            raise ImpactModelError(f"kv must be positive, got {self.kv}")
        if not self.gamma > 0:
            raise ImpactModelError(f"gamma must be positive, got {self.gamma}")

    def impact(self, v):
        v = np.asarray(v, dtype=float)
        return self.kv * np.sign(v) * np.abs(v) ** self.gamma


@dataclass(frozen=True)
class ModelParams:
    sigma: float
    S0: float
    X0: float
    permanent: PermanentImpact
    instantaneous: InstantaneousImpact = NO_EXECUTION_COST

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ImpactModelError(f"sigma must be non-negative, got {self.sigma}")
        if not self.S0 > 0:
            raise ImpactModelError(f"S0 must be positive, got {self.S0}")


@dataclass(frozen=True)
class Trajectory:
    """
    Deterministic piecewise-linear inventory path q on [0, T].

    Knots (t_i, q_i) with t_0 = 0 and strictly increasing times; the trading
    rate is constant between knots. ``schedule`` is 'linear' for the
    constant-participation liquidation q_t = q0 (1 - t/T).
    """
    times: Tuple[float, ...]
    inventory: Tuple[float, ...]
    schedule: str = SCHEDULE_KNOTS

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        inventory = np.asarray(self.inventory, dtype=float)
        if times.ndim != 1 or times.size < 2 or times.size != inventory.size:
            raise TrajectoryError("a trajectory needs at least two knots with matching times and inventory")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(inventory))):
            raise TrajectoryError("trajectory knots must be finite")
        if times[0] != 0:
            raise TrajectoryError(f"trajectory must start at t = 0, got {times[0]}")
        if np.any(np.diff(times) <= 0):
            raise TrajectoryError("knot times must be strictly increasing")
        if self.schedule not in (SCHEDULE_LINEAR, SCHEDULE_KNOTS):
            raise TrajectoryError(f"unknown schedule {self.schedule!r}")
        if self.schedule == SCHEDULE_LINEAR and (times.size != 2 or inventory[1] != 0):
            raise TrajectoryError("the linear schedule is the two-knot liquidation q0 -> 0")

    @classmethod
    def linear(cls, q0: float, T: float) -> 'Trajectory':
        if not T > 0:
            raise TrajectoryError(f"horizon T must be positive, got {T}")
        return cls((0.0, float(T)), (float(q0), 0.0), schedule=SCHEDULE_LINEAR)

    @classmethod
    def from_knots(cls, times: Sequence[float], inventory: Sequence[float]) -> 'Trajectory':
        return cls(tuple(float(t) for t in times), tuple(float(q) for q in inventory))

    @property
    def T(self) -> float:
        return self.times[-1]

    @property
    def q0(self) -> float:
        return self.inventory[0]

    @property
    def qT(self) -> float:
        return self.inventory[-1]

    @property
    def is_round_trip(self) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.inventory))))
        return abs(self.q0 - self.qT) <= CLOSURE_TOLERANCE * scale

    @property
    def is_liquidation(self) -> bool:
        return self.qT == 0

    def durations(self) -> np.ndarray:
        return np.diff(np.asarray(self.times, dtype=float))

    def rates(self) -> np.ndarray:
        """Trading rate v = -q' on each segment."""
        return -np.diff(np.asarray(self.inventory, dtype=float)) / self.durations()

    def segments(self):
        """Yield (t_start, t_end, q_start, q_end) for every linear piece."""
        for i in range(len(self.times) - 1):
            yield self.times[i], self.times[i + 1], self.inventory[i], self.inventory[i + 1]

    def q_at(self, t):
        """Exact inventory at time(s) t; q_T after the horizon."""
        return np.interp(t, self.times, self.inventory)

    def cumulative_cost(self, instantaneous: InstantaneousImpact, t):
        """Exact running cost int_0^t h(v_s) v_s ds (piecewise linear in t)."""
        segment_costs = instantaneous.cost_rate(self.rates()) * self.durations()
        knots = np.concatenate(([0.0], np.cumsum(segment_costs)))
        return np.interp(t, self.times, knots)


def _scalar_or_array(values):
    return float(values) if np.ndim(values) == 0 else values


def f_density(p: PermanentImpact, q):
    """Permanent impact density at executed volume q >= 0."""
    q = np.asarray(q, dtype=float)
    if np.any(q < 0):
        raise DomainError("the impact density is only defined for q >= 0")
    if p.A == 0 and p.alpha < 1 and np.any(q == 0):
        raise DomainError("the impact density blows up at q = 0 when A = 0 and alpha < 1; use F_cumulative")
    return _scalar_or_array(p.k * p.alpha * (q + p.A) ** (p.alpha - 1.0))


def F_cumulative(p: PermanentImpact, z):
    """F(z) = int_0^z f(|y|) dy, odd in z."""
    z = np.asarray(z, dtype=float)
    size = np.abs(z)
    if p.A == 0:
        values = p.k * np.sign(z) * size ** p.alpha
    else:
        values = p.k * np.sign(z) * ((size + p.A) ** p.alpha - p.A ** p.alpha)
    return _scalar_or_array(values)


def G_potential(p: PermanentImpact, z) -> float:
    """G(z) = int_0^z y f(|y|) dy, even in z."""
    size = abs(float(z))
    if size == 0:
        return 0.0
    if p.A == 0:
        return p.k * p.alpha / (1.0 + p.alpha) * size ** (1.0 + p.alpha)

    k_alpha, exponent = p.k * p.alpha, p.alpha - 1.0
    value, abserr = integrate.quad(
        lambda y: y * k_alpha * (y + p.A) ** exponent,
        0.0,
        size,
        epsabs=QUAD_TOLERANCE,
        epsrel=QUAD_TOLERANCE,
        limit=200,
    )
    requested = max(QUAD_TOLERANCE, QUAD_TOLERANCE * abs(value))
    if abserr > requested:
        raise QuadratureError(abserr, requested)
    return value


def H_integral(p: PermanentImpact, z):
    """H(z) = int_0^z F(y) dy, even in z; G(z) = z F(z) - H(z)."""
    z = np.asarray(z, dtype=float)
    size = np.abs(z)
    if p.A == 0:
        values = p.k * size ** (1.0 + p.alpha) / (1.0 + p.alpha)
    else:
        values = p.k * (
            ((size + p.A) ** (1.0 + p.alpha) - p.A ** (1.0 + p.alpha)) / (1.0 + p.alpha)
            - p.A ** p.alpha * size
        )
    return _scalar_or_array(values)


def permanent_cash_term(p: PermanentImpact, traj: Trajectory) -> float:
    """
    int_0^T (q_T - q_t) f(|q0 - q_t|) v_t dt for a piecewise-linear trajectory.

    With y = q0 - q_t (so dy = v dt) and D = q0 - q_T the integrand is
    (y - D) f(|y|) dy, whose antiderivative is G(y) - D F(y). The segment
    integrals telescope, so only y_0 = 0 and y_T = D remain and the result
    depends on the trajectory through q0 - q_T alone; f is never sampled.
    """
    D = traj.q0 - traj.qT
    return G_potential(p, D) - D * F_cumulative(p, D)


def execution_cost(instantaneous: InstantaneousImpact, traj: Trajectory) -> float:
    """int_0^T h(v_t) v_t dt, exact for piecewise-constant rates."""
    return math.fsum(instantaneous.cost_rate(traj.rates()) * traj.durations())


def expected_terminal_cash(m: ModelParams, traj: Trajectory) -> float:
    """E[X_T] for any trajectory; the Brownian term has zero mean."""
    return (
        m.X0
        + (traj.q0 - traj.qT) * m.S0
        + permanent_cash_term(m.permanent, traj)
        - execution_cost(m.instantaneous, traj)
    )


def _require_liquidation(traj: Trajectory):
    if not traj.is_liquidation:
        raise TrajectoryError(f"expected a liquidation (q_T = 0), got q_T = {traj.qT}")


def expected_liquidation_cash(m: ModelParams, traj: Trajectory) -> float:
    """E[X_T] = X0 + q0 S0 - int_0^q0 F - int h(v) v dt, for any impact density."""
    _require_liquidation(traj)
    return (
        m.X0
        + traj.q0 * m.S0
        - H_integral(m.permanent, traj.q0)
        - execution_cost(m.instantaneous, traj)
    )


def expected_liquidation_cash_powerlaw(m: ModelParams, q0: float, traj: Trajectory) -> float:
    """E[X_T] = X0 + q0 S0 - k/(1+alpha) |q0|^(1+alpha) - int h(v) v dt."""
    p = m.permanent
    if not p.is_power_law:
        raise ImpactModelError("the power-law liquidation formula requires A = 0")
    _require_liquidation(traj)
    if traj.q0 != q0:
        raise TrajectoryError(f"trajectory starts at {traj.q0}, expected q0 = {q0}")
    return (
        m.X0
        + q0 * m.S0
        - p.k / (1.0 + p.alpha) * abs(q0) ** (1.0 + p.alpha)
        - execution_cost(m.instantaneous, traj)
    )


def expected_permanent_shift(p: PermanentImpact, q0: float) -> float:
    """E[S_T' - S0] = -F(q0) after a liquidation, for any T' >= T."""
    return -F_cumulative(p, q0)


def _check_covariance_args(alpha, sigma, delta):
    if not 0 < alpha <= 1:
        raise ImpactModelError(f"alpha must be in (0, 1], got {alpha}")
    if not sigma >= 0:
        raise ImpactModelError(f"sigma must be non-negative, got {sigma}")
    if not delta >= 0:
        raise ImpactModelError(f"delta must be non-negative, got {delta}")


def linear_error_covariance(alpha: float, sigma: float, T: float, delta: float) -> np.ndarray:
    """Covariance of (eps1, eps2) for the linear schedule q_t = q0 (1 - t/T)."""
    _check_covariance_args(alpha, sigma, delta)
    c = 1.0 / (1.0 + alpha)
    var1 = T + delta
    cov = delta * c + T * (c - 0.5)
    var2 = delta * c * c + T / 3.0 * (1.0 + alpha ** 3) / (1.0 + alpha) ** 3
    return sigma ** 2 * np.array([[var1, cov], [cov, var2]])


def integral_error_covariance(traj: Trajectory, alpha: float, sigma: float, delta: float) -> np.ndarray:
    """Covariance of (eps1, eps2) from the integral form, exact on each linear piece."""
    _check_covariance_args(alpha, sigma, delta)
    _require_liquidation(traj)
    if traj.q0 == 0:
        raise TrajectoryError("the error covariance is undefined for q0 = 0")
    c = 1.0 / (1.0 + alpha)
    first = []
    second = []
    for t_start, t_end, q_start, q_end in traj.segments():
        a = q_start / traj.q0 - c
        b = q_end / traj.q0 - c
        duration = t_end - t_start
        first.append(duration * (a + b) / 2.0)
        second.append(duration * (a * a + a * b + b * b) / 3.0)
    var1 = traj.T + delta
    cov = delta * c - math.fsum(first)
    var2 = delta * c * c + math.fsum(second)
    return sigma ** 2 * np.array([[var1, cov], [cov, var2]])


def error_covariance(traj: Trajectory, alpha: float, sigma: float, delta: float) -> np.ndarray:
    """2x2 covariance of the two estimation residuals for a liquidation observed at T + delta."""
    _require_liquidation(traj)
    if traj.q0 == 0:
        raise TrajectoryError("the error covariance is undefined for q0 = 0")
    if traj.schedule == SCHEDULE_LINEAR:
        return linear_error_covariance(alpha, sigma, traj.T, delta)
    return integral_error_covariance(traj, alpha, sigma, delta)
