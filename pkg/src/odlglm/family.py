"""GLM families with canonical links.

Every solver in the package works with the log-likelihood-kernel
convention: the per-batch score is ``sum_i x_i (y_i - g(x_i' beta))`` and
the information is ``sum_i g'(x_i' beta) x_i x_i'``.  Unit deviance is only
used to report fit quality and to score cross-validation folds.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _kernels
from .errors import DimensionError, DomainError

# Linear predictors beyond this magnitude overflow exp() for the log link.
ETA_GUARD = _kernels.ETA_CLAMP


class FamilyKind(str, Enum):
    BERNOULLI_LOGIT = "bernoulli-logit"
    GAUSSIAN_IDENTITY = "gaussian-identity"
    POISSON_LOG = "poisson-log"


_KIND_CODES = {
    FamilyKind.BERNOULLI_LOGIT: _kernels.BERNOULLI,
    FamilyKind.GAUSSIAN_IDENTITY: _kernels.GAUSSIAN,
    FamilyKind.POISSON_LOG: _kernels.POISSON,
}


@dataclass(frozen=True)
class Family:
    """An exponential-dispersion family with its canonical link.

    Parameters
    ----------
    kind : FamilyKind or str
        One of ``"bernoulli-logit"``, ``"gaussian-identity"``,
        ``"poisson-log"``.
    dispersion : float
        Kept at 1.0; dispersion is never estimated.
    """

    kind: FamilyKind = FamilyKind.BERNOULLI_LOGIT
    dispersion: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", FamilyKind(self.kind))
        if not self.dispersion > 0:
            raise ValueError("dispersion must be positive")

    @property
    def code(self) -> int:
        """Integer tag understood by the compiled kernels."""
        return _KIND_CODES[self.kind]

    def check_response(self, y) -> None:
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError("response contains non-finite values")
        if self.kind is FamilyKind.BERNOULLI_LOGIT and not np.all((y == 0) | (y == 1)):
            raise DomainError("bernoulli response must be 0/1")
        if self.kind is FamilyKind.POISSON_LOG and np.any(y < 0):
            raise DomainError("poisson response must be nonnegative")


BERNOULLI = Family(FamilyKind.BERNOULLI_LOGIT)
GAUSSIAN = Family(FamilyKind.GAUSSIAN_IDENTITY)
POISSON = Family(FamilyKind.POISSON_LOG)


def get_family(name: str | Family) -> Family:
    if isinstance(name, Family):
        return name
    aliases = {"logistic": "bernoulli-logit", "binomial": "bernoulli-logit",
               "bernoulli": "bernoulli-logit", "gaussian": "gaussian-identity",
               "linear": "gaussian-identity", "poisson": "poisson-log"}
    return Family(FamilyKind(aliases.get(name, name)))


def _guard(family: Family, t):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise DomainError("linear predictor is not finite")
    if family.kind is FamilyKind.POISSON_LOG and np.any(np.abs(t) > ETA_GUARD):
        raise DomainError(f"|linear predictor| exceeds {ETA_GUARD:g} for the log link")
    return t


def link_mean(family: Family, t):
    """Mean function g evaluated at the linear predictor ``t``."""
    t = _guard(family, t)
    if family.kind is FamilyKind.GAUSSIAN_IDENTITY:
        return t.copy() if t.ndim else float(t)
    if family.kind is FamilyKind.BERNOULLI_LOGIT:
        # split by sign so exp() never overflows
        e = np.exp(-np.abs(t))
        mu = np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
        return mu if mu.ndim else float(mu)
    mu = np.exp(t)
    return mu if mu.ndim else float(mu)


def link_derivative(family: Family, t):
    """Derivative g'(t); equals the variance function for canonical links."""
    t = _guard(family, t)
    if family.kind is FamilyKind.GAUSSIAN_IDENTITY:
        d = np.ones_like(t)
    elif family.kind is FamilyKind.BERNOULLI_LOGIT:
        e = np.exp(-np.abs(t))
        d = e / (1.0 + e) ** 2
    else:
        d = np.exp(t)
    return d if d.ndim else float(d)


def _clamped(family: Family, t):
    # solver-side evaluation: clamp instead of raising
    if family.kind is FamilyKind.GAUSSIAN_IDENTITY:
        return t
    return np.clip(t, -ETA_GUARD, ETA_GUARD)


def mean_clamped(family: Family, t):
    return link_mean(family, _clamped(family, np.asarray(t, dtype=float)))


def derivative_clamped(family: Family, t):
    return link_derivative(family, _clamped(family, np.asarray(t, dtype=float)))


def _check_dims(X, y=None, beta=None):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionError(f"design must be 2-d, got shape {X.shape}")
    if y is not None:
        y = np.asarray(y, dtype=float)
        if y.shape != (X.shape[0],):
            raise DimensionError(f"response length {y.shape} does not match {X.shape[0]} rows")
    if beta is not None:
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (X.shape[1],):
            raise DimensionError(f"coefficient length {beta.shape} does not match {X.shape[1]} columns")
    return X, y, beta


def batch_score(family: Family, X, y, beta) -> np.ndarray:
    """Score of one batch, ``X' (y - g(X beta))``."""
    X, y, beta = _check_dims(X, y, beta)
    return X.T @ (y - mean_clamped(family, X @ beta))


def batch_information(family: Family, X, beta) -> np.ndarray:
    """Observed information of one batch, ``X' diag(g'(X beta)) X``."""
    X, _, beta = _check_dims(X, beta=beta)
    w = derivative_clamped(family, X @ beta)
    info = (X * w[:, None]).T @ X
    # symmetrize away accumulation-order asymmetry
    return 0.5 * (info + info.T)


def neg_loglik(family: Family, X, y, beta) -> float:
    """Negative log-likelihood kernel; its gradient is ``-batch_score``."""
    X, y, beta = _check_dims(X, y, beta)
    t = _clamped(family, X @ beta)
    if family.kind is FamilyKind.GAUSSIAN_IDENTITY:
        return float(0.5 * np.sum((y - t) ** 2))
    if family.kind is FamilyKind.BERNOULLI_LOGIT:
        return float(np.sum(np.logaddexp(0.0, t) - y * t))
    return float(np.sum(np.exp(t) - y * t))


def unit_deviance(family: Family, y, mu):
    """Unit deviance d(y; mu) >= 0, zero at mu == y."""
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if family.kind is FamilyKind.GAUSSIAN_IDENTITY:
        return (y - mu) ** 2
    if family.kind is FamilyKind.BERNOULLI_LOGIT:
        mu = np.clip(mu, 1e-300, 1 - 1e-16)
        with np.errstate(divide="ignore", invalid="ignore"):
            a = np.where(y > 0, y * np.log(y / mu), 0.0)
            b = np.where(y < 1, (1 - y) * np.log((1 - y) / (1 - mu)), 0.0)
        return 2.0 * (a + b)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(y > 0, y * np.log(y / mu), 0.0)
    return 2.0 * (a - (y - mu))


def deviance(family: Family, X, y, beta) -> float:
    X, y, beta = _check_dims(X, y, beta)
    return float(np.sum(unit_deviance(family, y, mean_clamped(family, X @ beta))))
