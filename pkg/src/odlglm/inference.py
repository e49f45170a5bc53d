"""Per-coordinate summary statistics and Wald inference.

For a tracked coordinate ``r`` the accumulator holds, summed over batches
``j <= b``::

    s1 = sum_j z_j' (y_j - g(X_j beta^(j)))
    S  = sum_j gamma~_j' J^(j)(beta^(j))          (a row vector)
    s2 = sum_j gamma~_j' J^(j)(beta^(j)) beta^(j)
    v  = sum_j (z_j' (y_j - g(X_j beta^(j))))^2

so the online error-correction term
``sum_j gamma~_j' J^(j) (beta^(b) - beta^(j))`` is ``S beta^(b) - s2``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy import special

from .batch import Batch
from .errors import DegenerateProjection, DimensionError
from .family import Family, batch_information, mean_clamped
from .projection import extend, residual_column

# floor applied before -log10 transforms of p-values
PVALUE_FLOOR = 1e-300


class VarianceMode(str, Enum):
    AS_WRITTEN = "as-written"
    PER_OBSERVATION = "per-observation"


@dataclass
class CoordAccumulator:
    r: int
    p: int
    s1: float = 0.0
    s2: float = 0.0
    S_row: np.ndarray = None
    v: float = 0.0

    def __post_init__(self):
        if self.S_row is None:
            self.S_row = np.zeros(self.p)

    def copy(self) -> "CoordAccumulator":
        return CoordAccumulator(self.r, self.p, self.s1, self.s2, self.S_row.copy(), self.v)


@dataclass
class InferenceRecord:
    batch_index: int
    r: int
    beta_lasso: float
    beta_debiased: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    lambda_used: float
    error: Optional[str] = field(default=None)

    def as_dict(self) -> dict:
        return asdict(self)


def accumulate(acc: CoordAccumulator, batch: Batch, beta_hat_b, gamma_hat_b,
               family: Family, info_batch=None,
               variance_mode: VarianceMode | str = VarianceMode.AS_WRITTEN) -> CoordAccumulator:
    """Fold batch ``b`` into the accumulator of coordinate ``acc.r``.

    ``info_batch`` is ``J^(b)(beta^(b))``; it is computed when omitted.
    """
    mode = VarianceMode(variance_mode)
    beta_hat_b = np.asarray(beta_hat_b, dtype=float)
    if batch.p != acc.p or beta_hat_b.shape != (acc.p,):
        raise DimensionError("batch, estimate and accumulator widths disagree")
    # overflow is detected below and reported as one error
    with np.errstate(over="ignore", invalid="ignore"):
        if info_batch is None:
            info_batch = batch_information(family, batch.X, beta_hat_b)
        z = residual_column(batch.X, gamma_hat_b, acc.r)
        resid = batch.y - mean_clamped(family, batch.X @ beta_hat_b)
        zr = float(z @ resid)
        row = extend(gamma_hat_b, acc.r) @ info_batch
        if mode is VarianceMode.AS_WRITTEN:
            dv = zr * zr
        else:
            dv = float(np.sum((z * resid) ** 2))
        out = CoordAccumulator(acc.r, acc.p, acc.s1 + zr, acc.s2 + float(row @ beta_hat_b),
                               acc.S_row + row, acc.v + dv)
    if not (np.isfinite(out.s1) and np.isfinite(out.s2) and np.isfinite(out.v)
            and np.all(np.isfinite(out.S_row))):
        raise FloatingPointError(f"non-finite accumulator update for coordinate {acc.r}")
    return out


def _check_tau(r, tau_hat, floor):
    if not tau_hat > floor:
        raise DegenerateProjection(r, tau_hat, floor)


def debiased_estimate(acc: CoordAccumulator, beta_hat_b, tau_hat: float,
                      floor: float = 0.0) -> float:
    """Lasso coordinate plus debiasing and online error-correction terms."""
    _check_tau(acc.r, tau_hat, floor)
    beta_hat_b = np.asarray(beta_hat_b, dtype=float)
    correction = float(acc.S_row @ beta_hat_b) - acc.s2
    return float(beta_hat_b[acc.r] + (acc.s1 + correction) / tau_hat)


def standard_error(acc: CoordAccumulator, tau_hat: float, floor: float = 0.0) -> float:
    _check_tau(acc.r, tau_hat, floor)
    return float(np.sqrt(max(acc.v, 0.0)) / tau_hat)


def normal_quantile(q):
    """Standard normal quantile (scipy's ``ndtri``)."""
    return special.ndtri(q)


def normal_cdf(x):
    return special.ndtr(x)


def confidence_interval(est: float, se: float, level: float = 0.95) -> tuple[float, float]:
    """Wald interval ``est -/+ z_{1 - alpha/2} se``."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    half = float(normal_quantile(0.5 + level / 2.0)) * se
    return est - half, est + half


def wald_pvalue(est: float, se: float) -> float:
    """Two-sided p-value ``2 (1 - Phi(|est| / se))``."""
    if se < 0:
        raise ValueError("se must be nonnegative")
    if est == 0:
        return 1.0
    if se == 0:
        return 0.0
    # ndtr on the negative tail keeps precision for large |z|
    return float(2.0 * special.ndtr(-abs(est) / se))


def neglog10_pvalue(p: float) -> float:
    return float(-np.log10(max(p, PVALUE_FLOOR)))
