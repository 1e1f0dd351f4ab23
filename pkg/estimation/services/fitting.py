"""
Two-stage estimation of the impact parameters from metaorder records.

Stage one fits y1 = -k sgn(q0) |q0|^alpha + eps1 with weights 1 / Var(eps1);
stage two fits y2(alpha_hat) = eta sgn(q0) |q0 / T|^beta + eps2 with weights
1 / Var(eps2). In both stages the scale parameter is profiled out by weighted
linear least squares and the exponent is found by a bounded scalar search.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from ..exceptions import ConvergenceError, IdentificationError
from .metaorders import MetaorderRecord, observable_y1, observable_y2, percentage_decomposition

logger = logging.getLogger(__name__)

DECOMPOSITION_COLUMNS = ('slippage_pct', 'price_return_pct', 'cumulative_impact_pct')
EXPONENT_FLOOR = 1e-6
EXPONENT_TOLERANCE = 1e-10
MIN_RECORDS = 3


@dataclass(frozen=True)
class FitResult:
    names: Tuple[str, str]
    estimates: Tuple[float, float]
    stderrs: Tuple[float, float]
    objective: float
    iterations: int
    converged: bool
    n_records: int
    alpha_used: Optional[float] = None
    fixed: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if any(not se >= 0 for se in self.stderrs):
            raise ConvergenceError(f"negative or undefined standard errors {self.stderrs}")

    def estimate(self, name: str) -> float:
        return self.estimates[self.names.index(name)]

    def stderr(self, name: str) -> float:
        return self.stderrs[self.names.index(name)]

    def rows(self, pipeline: str) -> List[dict]:
        return [
            {'pipeline': pipeline, 'parameter': name, 'estimate': estimate, 'stderr': stderr}
            for name, estimate, stderr in zip(self.names, self.estimates, self.stderrs)
        ]


def _volatilities(records: Sequence[MetaorderRecord]) -> np.ndarray:
    sigma = np.array([r.sigma for r in records], dtype=float)
    if np.all(sigma == 0):
        logger.warning("All records are noiseless; fitting with unit volatility weights")
        return np.ones_like(sigma)
    if np.any(sigma == 0):
        raise IdentificationError("records mix zero and positive volatilities; weights are undefined")
    return sigma


def permanent_weights(records: Sequence[MetaorderRecord]) -> np.ndarray:
    """1 / Var(eps1) = 1 / (sigma^2 (T + delta))."""
    sigma = _volatilities(records)
    horizon = np.array([r.T + r.delta for r in records])
    return 1.0 / (sigma ** 2 * horizon)


def instantaneous_weights(records: Sequence[MetaorderRecord], alpha: float) -> np.ndarray:
    """1 / Var(eps2) from the linear-schedule closed form."""
    sigma = _volatilities(records)
    unit = np.array([r.residual_covariance(alpha, sigma=1.0)[1, 1] for r in records])
    return 1.0 / (sigma ** 2 * unit)


def _check_design(records, magnitudes: np.ndarray, label: str):
    if len(records) < MIN_RECORDS:
        raise IdentificationError(f"at least {MIN_RECORDS} records are needed, got {len(records)}")
    if np.unique(magnitudes).size < 2:
        raise IdentificationError(f"all records share one {label} level; the exponent is not identifiable")


class _PowerLawFit:
    """
    Weighted fit of y = scale * sign * magnitude ** exponent.

    For a fixed exponent the scale is the weighted least squares solution;
    the exponent minimizes the profiled weighted residual sum of squares.
    """

    def __init__(self, y: np.ndarray, sign: np.ndarray, magnitude: np.ndarray, weights: np.ndarray):
        self.y = y
        self.sign = sign
        self.magnitude = magnitude
        self.log_magnitude = np.log(magnitude)
        self.weights = weights

    def regressor(self, exponent: float) -> np.ndarray:
        return self.sign * self.magnitude ** exponent

    def profile(self, exponent: float) -> Tuple[float, float]:
        x = self.regressor(exponent)
        denominator = np.dot(self.weights, x * x)
        if not denominator > 0:
            raise IdentificationError("degenerate design: the regressor vanishes")
        scale = np.dot(self.weights, x * self.y) / denominator
        residual = self.y - scale * x
        return float(scale), float(np.dot(self.weights, residual * residual))

    def rss(self, exponent: float) -> float:
        return self.profile(exponent)[1]

    def search(self, upper: float = 1.0) -> Tuple[float, int, bool]:
        result = optimize.minimize_scalar(
            self.rss,
            bounds=(EXPONENT_FLOOR, upper),
            method='bounded',
            options={'xatol': EXPONENT_TOLERANCE, 'maxiter': 500},
        )
        best, iterations = float(result.x), int(result.nfev)
        # the bounded search never lands exactly on an endpoint
        for endpoint in (EXPONENT_FLOOR, upper):
            iterations += 1
            if self.rss(endpoint) < self.rss(best):
                best = endpoint
        return best, iterations, bool(result.success)

    def standard_errors(self, scale: float, exponent: float, rss: float, fixed_exponent: bool) -> Tuple[float, float]:
        """Gauss-Newton covariance s^2 (J' W J)^-1 with s^2 = RSS / (n - p)."""
        x = self.regressor(exponent)
        if fixed_exponent:
            n_params = 1
            jacobian = x[:, None]
        else:
            n_params = 2
            jacobian = np.column_stack((x, scale * x * self.log_magnitude))
        dof = self.y.size - n_params
        s2 = rss / dof
        information = jacobian.T @ (self.weights[:, None] * jacobian)
        try:
            covariance = s2 * np.linalg.inv(information)
        except np.linalg.LinAlgError:
            raise IdentificationError("singular information matrix; the design does not identify both parameters")
        se = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
        if fixed_exponent:
            return float(se[0]), 0.0
        return float(se[0]), float(se[1])


def _run(fit: _PowerLawFit, names, exponent: Optional[float], n_records: int, alpha_used=None) -> FitResult:
    fixed = exponent is not None
    if fixed:
        iterations, converged = 1, True
    else:
        exponent, iterations, converged = fit.search()
    if not converged:
        raise ConvergenceError(f"{names[1]} search did not converge after {iterations} evaluations")
    scale, rss = fit.profile(exponent)
    se_scale, se_exponent = fit.standard_errors(scale, exponent, rss, fixed)
    return FitResult(
        names=names,
        estimates=(scale, float(exponent)),
        stderrs=(se_scale, se_exponent),
        objective=rss,
        iterations=iterations,
        converged=converged,
        n_records=n_records,
        alpha_used=alpha_used,
        fixed=(names[1],) if fixed else (),
    )


def fit_permanent(records: Sequence[MetaorderRecord], alpha: Optional[float] = None) -> FitResult:
    """
    Estimate (k, alpha) from the post-trade price shifts.

    With ``alpha`` given the exponent is held fixed and only k is fitted.
    """
    records = list(records)
    magnitude = np.array([abs(r.q0) for r in records])
    _check_design(records, magnitude, '|q0|')
    if alpha is not None and not 0 < alpha <= 1:
        raise IdentificationError(f"alpha must be in (0, 1], got {alpha}")

    y1 = np.array([observable_y1(r) for r in records])
    sign = -np.sign([r.q0 for r in records])
    fit = _PowerLawFit(y1, sign, magnitude, permanent_weights(records))
    result = _run(fit, ('k', 'alpha'), alpha, len(records))
    logger.info(
        f"Permanent fit on {len(records)} records: k={result.estimates[0]:.6g} "
        f"alpha={result.estimates[1]:.6g} (objective {result.objective:.6g})"
    )
    return result


def fit_instantaneous(records: Sequence[MetaorderRecord], alpha_hat: float) -> FitResult:
    """Estimate (eta, beta) from the slippage observable y2 computed with ``alpha_hat``."""
    records = list(records)
    magnitude = np.array([abs(r.rate) for r in records])
    _check_design(records, magnitude, '|q0 / T|')
    if not 0 < alpha_hat <= 1:
        raise IdentificationError(f"alpha must be in (0, 1], got {alpha_hat}")

    y2 = np.array([observable_y2(r, alpha_hat) for r in records])
    sign = np.sign([r.q0 for r in records])
    fit = _PowerLawFit(y2, sign, magnitude, instantaneous_weights(records, alpha_hat))
    result = _run(fit, ('eta', 'beta'), None, len(records), alpha_used=alpha_hat)
    logger.info(
        f"Instantaneous fit on {len(records)} records with alpha={alpha_hat:.6g}: "
        f"eta={result.estimates[0]:.6g} beta={result.estimates[1]:.6g}"
    )
    return result


@dataclass(frozen=True)
class ResidualReport:
    ids: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    variance_z1: float
    variance_z2: float
    correlation: float
    expected_correlation: float
    regressor_correlation: float
    correlation_band: float
    # slippage, price return and cumulated impact in percent of notional, one row per order
    decomposition: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))

    @property
    def misspecification_detected(self) -> bool:
        return abs(self.regressor_correlation) > self.correlation_band

    def rows(self) -> List[dict]:
        rows = []
        for index, order_id in enumerate(self.ids):
            row = {
                'id': int(order_id),
                'eps1': self.eps1[index],
                'eps2': self.eps2[index],
                'z1': self.z1[index],
                'z2': self.z2[index],
            }
            if len(self.decomposition):
                row.update(zip(DECOMPOSITION_COLUMNS, self.decomposition[index]))
            rows.append(row)
        return rows

    def summary(self) -> Dict[str, float]:
        return {
            'variance_z1': self.variance_z1,
            'variance_z2': self.variance_z2,
            'correlation': self.correlation,
            'expected_correlation': self.expected_correlation,
            'regressor_correlation': self.regressor_correlation,
            'correlation_band': self.correlation_band,
            'misspecification_detected': self.misspecification_detected,
        }


def _pearson(first: np.ndarray, second: np.ndarray) -> float:
    if first.std() == 0 or second.std() == 0:
        return 0.0
    return float(np.corrcoef(first, second)[0, 1])


def residual_diagnostics(records: Sequence[MetaorderRecord], permanent: FitResult, instantaneous: FitResult) -> ResidualReport:
    """
    Standardized residuals of both equations, their empirical correlation next
    to the model's, and the correlation of the y2 residuals with the permanent
    regressor sgn(q0) |q0|^alpha_hat (a 3 / sqrt(n) band flags misspecification).
    """
    records = list(records)
    k, alpha = permanent.estimates
    eta, beta = instantaneous.estimates
    alpha_used = instantaneous.alpha_used if instantaneous.alpha_used is not None else alpha

    q0 = np.array([r.q0 for r in records])
    rate = np.array([r.rate for r in records])
    sigma = _volatilities(records)
    eps1 = np.array([observable_y1(r) for r in records]) + k * np.sign(q0) * np.abs(q0) ** alpha
    eps2 = np.array([observable_y2(r, alpha_used) for r in records]) - eta * np.sign(q0) * np.abs(rate) ** beta

    covariances = [r.residual_covariance(alpha_used, sigma=1.0) for r in records]
    var1 = sigma ** 2 * np.array([c[0, 0] for c in covariances])
    var2 = sigma ** 2 * np.array([c[1, 1] for c in covariances])
    model_correlation = np.array([c[0, 1] / np.sqrt(c[0, 0] * c[1, 1]) for c in covariances])
    z1 = eps1 / np.sqrt(var1)
    z2 = eps2 / np.sqrt(var2)

    n = len(records)
    report = ResidualReport(
        ids=np.array([r.id for r in records]),
        eps1=eps1,
        eps2=eps2,
        z1=z1,
        z2=z2,
        variance_z1=float(np.mean(z1 * z1)),
        variance_z2=float(np.mean(z2 * z2)),
        correlation=_pearson(z1, z2),
        expected_correlation=float(np.mean(model_correlation)),
        regressor_correlation=_pearson(z2, np.sign(q0) * np.abs(q0) ** alpha),
        correlation_band=3.0 / np.sqrt(n),
        decomposition=np.array([percentage_decomposition(r, alpha_used) for r in records]),
    )
    logger.info(
        f"Residuals: var(z1)={report.variance_z1:.4f} var(z2)={report.variance_z2:.4f} "
        f"corr={report.correlation:.4f} (model {report.expected_correlation:.4f})"
    )
    return report


@dataclass(frozen=True)
class EstimationReport:
    permanent: FitResult
    instantaneous: FitResult
    residuals: ResidualReport
    misspecified_permanent: Optional[FitResult] = None
    misspecified_instantaneous: Optional[FitResult] = None
    misspecified_residuals: Optional[ResidualReport] = None

    @property
    def eta_bias_in_stderrs(self) -> Optional[float]:
        """(eta_misspecified - eta_hat) in units of the misspecified fit's standard error."""
        if self.misspecified_instantaneous is None:
            return None
        se = self.misspecified_instantaneous.stderr('eta')
        bias = self.misspecified_instantaneous.estimate('eta') - self.instantaneous.estimate('eta')
        if se == 0:
            return float('inf') if bias != 0 else 0.0
        return bias / se

    def rows(self) -> List[dict]:
        rows = self.permanent.rows('estimated') + self.instantaneous.rows('estimated')
        if self.misspecified_permanent is not None:
            rows += self.misspecified_permanent.rows('misspecified')
            rows += self.misspecified_instantaneous.rows('misspecified')
        return rows

    def summary_lines(self) -> List[str]:
        lines = [f"records: {self.permanent.n_records}"]
        for label, fit in (('permanent', self.permanent), ('instantaneous', self.instantaneous)):
            for name in fit.names:
                suffix = ' (fixed)' if name in fit.fixed else ''
                lines.append(f"{label} {name}: {fit.estimate(name)!r} +/- {fit.stderr(name)!r}{suffix}")
        if self.misspecified_instantaneous is not None:
            alpha = self.misspecified_instantaneous.alpha_used
            fit = self.misspecified_instantaneous
            lines.append(f"misspecified alpha={alpha!r}: eta={fit.estimate('eta')!r} +/- {fit.stderr('eta')!r}")
            lines.append(f"misspecified eta bias: {self.eta_bias_in_stderrs!r} standard errors")
        if self.misspecified_residuals is not None:
            for key in ('regressor_correlation', 'correlation_band', 'misspecification_detected'):
                lines.append(f"misspecified residual {key}: {self.misspecified_residuals.summary()[key]!r}")
        for key, value in self.residuals.summary().items():
            lines.append(f"residual {key}: {value!r}")
        return lines


def estimate(records: Sequence[MetaorderRecord], alpha: Optional[float] = None, misspecified_alpha: Optional[float] = 1.0) -> EstimationReport:
    """Both stages, the residual check and optionally the pipeline run with alpha held at ``misspecified_alpha``."""
    records = list(records)
    permanent = fit_permanent(records, alpha=alpha)
    instantaneous = fit_instantaneous(records, permanent.estimate('alpha'))
    residuals = residual_diagnostics(records, permanent, instantaneous)
    misspecified_permanent = misspecified_instantaneous = misspecified_residuals = None
    if misspecified_alpha is not None:
        misspecified_permanent = fit_permanent(records, alpha=misspecified_alpha)
        misspecified_instantaneous = fit_instantaneous(records, misspecified_alpha)
        misspecified_residuals = residual_diagnostics(records, misspecified_permanent, misspecified_instantaneous)
        if misspecified_residuals.misspecification_detected and not residuals.misspecification_detected:
            logger.info(f"alpha={misspecified_alpha!r} residuals correlate with the permanent regressor beyond the 3 sigma band")
    return EstimationReport(
        permanent=permanent,
        instantaneous=instantaneous,
        residuals=residuals,
        misspecified_permanent=misspecified_permanent,
        misspecified_instantaneous=misspecified_instantaneous,
        misspecified_residuals=misspecified_residuals,
    )
