"""
Synthetic metaorder datasets, the two estimation observables and the metaorder CSV.

Sign convention: q0 > 0 is a sell, q0 < 0 a buy. Every record is a
constant-participation liquidation q_t = q0 (1 - t/T) observed at T + delta.
"""
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from impact.serializers import flatten_errors
from impact.services.model import ModelParams, Trajectory, linear_error_covariance
from impact.services.simulator import CASH_EXACT, GridConfig, make_generator, simulate_path, stream

from ..exceptions import IdentificationError, MetaorderFormatError

logger = logging.getLogger(__name__)

SCHEMA_COLUMNS = ['id', 'q0', 'T', 'delta', 'S0', 'S_Tprime', 'cash_change', 'sigma', 'schedule']
SCHEDULE_LINEAR = 'linear'

DESIGN_STREAM = 0
PATH_STREAM = 1


@dataclass(frozen=True)
class MetaorderRecord:
    id: int
    q0: float
    T: float
    delta: float
    S0: float
    S_Tprime: float
    cash_change: float
    sigma: float
    schedule: str = SCHEDULE_LINEAR

    def __post_init__(self):
        if not self.T > 0:
            raise MetaorderFormatError(f"order {self.id}: T must be positive, got {self.T}")
        if not self.delta >= 0:
            raise MetaorderFormatError(f"order {self.id}: delta must be non-negative, got {self.delta}")
        if self.q0 == 0:
            raise MetaorderFormatError(f"order {self.id}: q0 must be non-zero")
        if not self.S0 > 0:
            raise MetaorderFormatError(f"order {self.id}: S0 must be positive, got {self.S0}")
        if not self.sigma >= 0:
            raise MetaorderFormatError(f"order {self.id}: sigma must be non-negative, got {self.sigma}")
        if self.schedule != SCHEDULE_LINEAR:
            raise MetaorderFormatError(f"order {self.id}: unsupported schedule {self.schedule!r}")

    @property
    def is_sell(self) -> bool:
        return self.q0 > 0

    @property
    def rate(self) -> float:
        """Constant trading rate q0 / T."""
        return self.q0 / self.T

    def residual_covariance(self, alpha: float, sigma: Optional[float] = None) -> np.ndarray:
        """Covariance of (eps1, eps2) for this order, at its own sigma unless one is given."""
        return linear_error_covariance(alpha, self.sigma if sigma is None else sigma, self.T, self.delta)


@dataclass(frozen=True)
class DatasetDesign:
    """q0 magnitudes log-uniform on [q0_min, q0_max], T uniform on [T_min, T_max], fixed lag."""
    n_orders: int
    q0_min: float
    q0_max: float
    T_min: float
    T_max: float
    delta: float = 0.0
    n_steps: int = 64

    def __post_init__(self):
        if self.n_orders < 1:
            raise IdentificationError(f"n_orders must be at least 1, got {self.n_orders}")
        if not 0 < self.q0_min <= self.q0_max:
            raise IdentificationError(f"q0 range must satisfy 0 < q0_min <= q0_max, got [{self.q0_min}, {self.q0_max}]")
        if not 0 < self.T_min <= self.T_max:
            raise IdentificationError(f"T range must satisfy 0 < T_min <= T_max, got [{self.T_min}, {self.T_max}]")
        if not self.delta >= 0:
            raise IdentificationError(f"delta must be non-negative, got {self.delta}")
        if self.n_steps < 2:
            raise IdentificationError(f"n_steps must be at least 2, got {self.n_steps}")

    def draw(self, base_seed: int, index: int) -> Tuple[float, float]:
        """Signed q0 and T of order ``index``; even indices sell."""
        rng = make_generator(stream(base_seed, DESIGN_STREAM, index))
        u_size, u_duration = rng.random(2)
        if self.q0_min == self.q0_max:
            size = self.q0_min
        else:
            low, high = math.log(self.q0_min), math.log(self.q0_max)
            size = math.exp(low + (high - low) * u_size)
        T = self.T_min + (self.T_max - self.T_min) * u_duration
        return (size if index % 2 == 0 else -size), T


def _generate_record(true_params: ModelParams, design: DatasetDesign, base_seed: int, index: int) -> MetaorderRecord:
    q0, T = design.draw(base_seed, index)
    trajectory = Trajectory.linear(q0, T)
    grid = GridConfig(n_steps=design.n_steps, T=T, delta=design.delta, cash_scheme=CASH_EXACT)
    path = simulate_path(true_params, trajectory, grid, stream(base_seed, PATH_STREAM, index))
    return MetaorderRecord(
        id=index,
        q0=q0,
        T=T,
        delta=design.delta,
        S0=true_params.S0,
        S_Tprime=path.S_T_prime,
        cash_change=path.X_T - true_params.X0,
        sigma=true_params.sigma,
    )


def generate_dataset(true_params: ModelParams, design: DatasetDesign, base_seed: int, threads: int = 1) -> List[MetaorderRecord]:
    """
    Simulate ``design.n_orders`` liquidations under ``true_params``.

    Order i takes its design from stream (base_seed, 0, i) and its Brownian
    path from stream (base_seed, 1, i): the first m records of a dataset are
    the dataset of size m.
    """
    logger.info(f"Generating {design.n_orders} metaorders (base_seed={base_seed})")
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        records = list(pool.map(
            lambda index: _generate_record(true_params, design, base_seed, index),
            range(design.n_orders),
        ))
    logger.info(f"Generated {len(records)} metaorders")
    return records


def observable_y1(r: MetaorderRecord) -> float:
    """Post-trade price shift S_T' - S0."""
    return r.S_Tprime - r.S0


def _check_alpha(alpha: float):
    if not 0 < alpha <= 1:
        raise IdentificationError(f"alpha must be in (0, 1], got {alpha}")


def observable_y2(r: MetaorderRecord, alpha: float) -> float:
    """(S_T' + alpha S0) / (1 + alpha) - (X_T - X0) / q0; its mean is the per-share execution cost."""
    _check_alpha(alpha)
    if r.q0 == 0:
        raise IdentificationError("y2 is undefined for q0 = 0")
    return (r.S_Tprime + alpha * r.S0) / (1.0 + alpha) - r.cash_change / r.q0


def percentage_decomposition(r: MetaorderRecord, alpha: float) -> Tuple[float, float, float]:
    """
    Display-only split in percent of the traded notional q0 S0.

    Returns (slippage, price return, slippage + price return / (1 + alpha));
    the last one estimates the cumulated execution cost.
    """
    _check_alpha(alpha)
    notional = r.q0 * r.S0
    slippage = 100.0 * (notional - r.cash_change) / notional
    price_return = 100.0 * (r.S_Tprime - r.S0) / r.S0
    return slippage, price_return, slippage + price_return / (1.0 + alpha)


def write_metaorders(records: Iterable[MetaorderRecord], path: Path) -> Path:
    """Metaorder CSV: fixed header, '.' decimal point, shortest round-trip float repr, LF endings."""
    frame = pd.DataFrame(
        [[getattr(r, column) for column in SCHEMA_COLUMNS] for r in records],
        columns=SCHEMA_COLUMNS,
    )
    frame.to_csv(path, index=False, lineterminator='\n', encoding='utf-8')
    return path


_PARSER_LINE = re.compile(r'line (\d+)')


def read_metaorders(path: Path) -> List[MetaorderRecord]:
    """Read and validate a metaorder CSV; the first bad row raises MetaorderFormatError with its line."""
    from ..serializers import MetaorderRowSerializer

    path = Path(path)
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding='utf-8',
        )
    except FileNotFoundError:
        raise MetaorderFormatError(f"metaorder file not found: {path}")
    except pd.errors.EmptyDataError:
        raise MetaorderFormatError("empty metaorder file", line=1)
    except pd.errors.ParserError as e:
        found = _PARSER_LINE.search(str(e))
        raise MetaorderFormatError(f"malformed row: {e}", line=int(found.group(1)) if found else None)
    except UnicodeDecodeError as e:
        raise MetaorderFormatError(f"metaorder file is not UTF-8: {e}")

    if list(frame.columns) != SCHEMA_COLUMNS:
        raise MetaorderFormatError(
            f"header must be {','.join(SCHEMA_COLUMNS)}, got {','.join(map(str, frame.columns))}",
            line=1,
        )

    records = []
    for index, row in enumerate(frame.fillna('').to_dict(orient='records')):
        line = index + 2
        serializer = MetaorderRowSerializer(data=row)
        if not serializer.is_valid():
            raise MetaorderFormatError('; '.join(flatten_errors(serializer.errors)), line=line)
        try:
            records.append(MetaorderRecord(**serializer.validated_data))
        except MetaorderFormatError as e:
            raise MetaorderFormatError(str(e), line=line)
    if not records:
        raise MetaorderFormatError("metaorder file has no rows", line=2)
    logger.info(f"Read {len(records)} metaorders from {path}")
    return records


def scaled(records: Iterable[MetaorderRecord], factor: float) -> List[MetaorderRecord]:
    """Records with every price-denominated field multiplied by ``factor``."""
    return [
        replace(
            r,
            S0=r.S0 * factor,
            S_Tprime=r.S_Tprime * factor,
            cash_change=r.cash_change * factor,
            sigma=r.sigma * factor,
        )
        for r in records
    ]


def mirrored(records: Iterable[MetaorderRecord]) -> List[MetaorderRecord]:
    """Every sell becomes the mirrored buy: q0, the price move and the cash move change sign."""
    return [
        replace(
            r,
            q0=-r.q0,
            S_Tprime=2.0 * r.S0 - r.S_Tprime,
            cash_change=r.cash_change - 2.0 * r.S0 * r.q0,
        )
        for r in records
    ]
