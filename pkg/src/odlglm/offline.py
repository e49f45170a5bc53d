"""Full-data reference estimators.

These are used as test oracles and as the comparison columns of the
simulation harness: the offline lasso, the offline debiased lasso (the
one-batch case of the streaming engine) and maximum likelihood by IRLS.
"""

from __future__ import annotations

import logging
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .batch import Batch
from .engine import EngineConfig, OnlineDebiasedLasso
from .family import (BERNOULLI, Family, FamilyKind, batch_information, batch_score,
                     deviance, get_family, mean_clamped)
from .inference import InferenceRecord, VarianceMode
from .lasso import LassoState, solve_surrogate
from .prox import ProxConfig

log = logging.getLogger(__name__)

IRLS_MAX_ITER = 100
IRLS_MAX_HALVING = 20
IRLS_TOL = 1e-10
# fitted probabilities this close to 0 or 1 indicate separation
SEPARATION_EPS = 1e-10


def offline_lasso(X, y, lam: float, family: Family | str = BERNOULLI,
                  config: ProxConfig = ProxConfig(), init=None) -> np.ndarray:
    """Minimize ``nll(beta) / (2N) + lam ||beta||_1`` on the full data."""
    family = get_family(family)
    batch = Batch(X, y)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    return solve_surrogate(LassoState(batch.p), batch, lam, config, family, init=init).x


def offline_debiased(X, y, lam: Optional[float] = None, family: Family | str = BERNOULLI,
                     config: ProxConfig = ProxConfig(),
                     coords: Optional[Sequence[int]] = None, ci_level: float = 0.95,
                     variance_mode: VarianceMode | str = VarianceMode.AS_WRITTEN,
                     intercept: bool = False,
                     grid: Sequence[float] = (1e-4, 1e-3, 0.01, 0.05)) -> list[InferenceRecord]:
    """Debiased lasso on the whole dataset delivered as one batch.

    With ``lam=None`` the penalty is chosen by cross-validation over
    ``grid``, exactly as the engine does on its first batch.
    """
    batch = Batch(X, y)
    cfg = EngineConfig(family=get_family(family), lambda_grid=grid if lam is None else [lam],
                       prox=config, tracked_coords=coords, ci_level=ci_level,
                       variance_mode=variance_mode, intercept=intercept)
    return OnlineDebiasedLasso(cfg, batch.p).process_batch(batch)


class MLEResult(NamedTuple):
    beta: np.ndarray
    converged: bool
    se: np.ndarray
    iterations: int
    singular: bool
    separated: bool


def irls_mle(X, y, family: Family | str = BERNOULLI, max_iter: int = IRLS_MAX_ITER,
             max_halving: int = IRLS_MAX_HALVING, tol: float = IRLS_TOL) -> MLEResult:
    """Unpenalized maximum likelihood by Newton steps with step-halving.

    Problems are reported through the result flags and never raised:
    ``singular`` when the information cannot be inverted, ``separated``
    when fitted logistic probabilities collapse to 0 or 1.
    """
    family = get_family(family)
    batch = Batch(X, y)
    X, y = batch.X, batch.y
    p = batch.p
    beta = np.zeros(p)
    dev = deviance(family, X, y, beta)
    converged = singular = separated = False
    it = 0
    for it in range(1, max_iter + 1):
        info = batch_information(family, X, beta)
        score = batch_score(family, X, y, beta)
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(info, score, rcond=None)
            singular = True
        t = 1.0
        for _ in range(max_halving + 1):
            cand = beta + t * step
            new_dev = deviance(family, X, y, cand)
            if np.isfinite(new_dev) and new_dev <= dev + 1e-12 * abs(dev):
                break
            t *= 0.5
        else:
            break
        beta = cand
        done = abs(dev - new_dev) <= tol * (abs(new_dev) + 0.1)
        dev = new_dev
        if done:
            converged = True
            break
    if family.kind is FamilyKind.BERNOULLI_LOGIT:
        mu = mean_clamped(family, X @ beta)
        if np.any(np.minimum(mu, 1 - mu) < SEPARATION_EPS):
            separated = True
            converged = False
    info = batch_information(family, X, beta)
    with np.errstate(all="ignore"):
        if np.linalg.matrix_rank(info) < p:
            singular = True
            se = np.full(p, np.inf)
        else:
            cov = np.linalg.inv(info)
            se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    if singular:
        converged = False
    if not converged:
        log.info("IRLS did not converge (iterations=%d, singular=%s, separated=%s)",
                 it, singular, separated)
    return MLEResult(beta, converged, se, it, singular, separated)
