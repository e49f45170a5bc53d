"""Streaming lasso over summary statistics.

After batch ``b`` the only retained quantities are the current estimate,
the aggregated information ``J~(b) = sum_j J^(j)(beta^(j))`` and the
running counts.  A new batch is absorbed by minimizing

    ( nll_b(beta) + 0.5 (beta - beta^(b-1))' J~(b-1) (beta - beta^(b-1)) ) / (2 N_b)
        + lam * ||beta||_1

whose negative gradient, times ``2 N_b``, is the aggregated score
``U~(b)(beta) = J~(b-1) (beta^(b-1) - beta) + U^(b)(beta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .batch import Batch
from .errors import DimensionError
from .family import Family, batch_information, batch_score, neg_loglik
from .prox import ProxConfig, ProxResult, check_kernel_status


@dataclass
class LassoState:
    """Summary statistics of the lasso chain after ``b`` batches.

    ``candidate_betas`` maps each tuning value to the one-step-ahead
    estimate solved at this step from the previous canonical state; they
    are scored on the next batch to pick its penalty.
    """

    p: int
    b: int = 0
    n_total: int = 0
    beta_hat: np.ndarray = None
    info_agg: np.ndarray = None
    candidate_betas: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.beta_hat is None:
            self.beta_hat = np.zeros(self.p)
        if self.info_agg is None:
            self.info_agg = np.zeros((self.p, self.p))

    def copy(self) -> "LassoState":
        return replace(self, beta_hat=self.beta_hat.copy(), info_agg=self.info_agg.copy(),
                       candidate_betas={k: v.copy() for k, v in self.candidate_betas.items()})


def _check(state: LassoState, batch: Batch):
    if batch.p != state.p:
        raise DimensionError(f"batch has {batch.p} columns, state expects {state.p}")


def aggregated_gradient(state: LassoState, batch: Batch, beta, family: Family) -> np.ndarray:
    """Aggregated score ``J~(b-1) (beta^(b-1) - beta) + U^(b)(beta)``."""
    _check(state, batch)
    beta = np.asarray(beta, dtype=float)
    hist = state.info_agg @ (state.beta_hat - beta)
    return hist + batch_score(family, batch.X, batch.y, beta)


def surrogate_objective(state: LassoState, batch: Batch, beta, lam: float, family: Family,
                        mask=None) -> float:
    beta = np.asarray(beta, dtype=float)
    n_total = state.n_total + batch.n
    d = beta - state.beta_hat
    smooth = (neg_loglik(family, batch.X, batch.y, beta) + 0.5 * d @ state.info_agg @ d)
    mask = np.ones(state.p, dtype=bool) if mask is None else mask
    return smooth / (2.0 * n_total) + lam * np.abs(beta[mask]).sum()


def solve_surrogate(state: LassoState, batch: Batch, lam: float, config: ProxConfig,
                    family: Family, init=None) -> ProxResult:
    """Minimize the step-``b`` surrogate at one penalty level.

    Warm-starts at ``beta^(b-1)`` (at zero for the first batch).
    """
    _check(state, batch)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    n_total = state.n_total + batch.n
    x0 = state.beta_hat if init is None else np.asarray(init, dtype=float)
    beta, iters, status = _kernels.glm_surrogate_ista(
        batch.X, batch.y, family.code, state.info_agg, state.beta_hat, float(n_total),
        float(lam), config.mask_for(state.p), np.array(x0, dtype=float),
        float(config.learning_rate), float(config.stop_tol), int(config.max_iter))
    converged = check_kernel_status(status, iters, f"lasso solve (lambda={lam:g})")
    return ProxResult(beta, int(iters), converged)


def commit(state: LassoState, batch: Batch, beta_new, family: Family) -> LassoState:
    """Advance the chain to step ``b`` with the accepted estimate."""
    new = state.copy()
    new.info_agg = state.info_agg + batch_information(family, batch.X, beta_new)
    new.beta_hat = np.array(beta_new, dtype=float)
    new.n_total = state.n_total + batch.n
    new.b = state.b + 1
    return new


def update_lasso(state: LassoState, batch: Batch, lam: float, config: ProxConfig,
                 family: Family) -> LassoState:
    res = solve_surrogate(state, batch, lam, config, family)
    return commit(state, batch, res.x, family)


def update_candidates(state: LassoState, batch: Batch, grid, config: ProxConfig,
                      family: Family, solves=None) -> dict:
    """Solve the step-``b`` surrogate for every tuning value.

    All solves start from the same canonical state, so they are
    independent.  When ``solves`` is a list, each :class:`ProxResult` is
    appended to it for diagnostics.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty tuning grid")
    out = {}
    for lam in grid:
        res = solve_surrogate(state, batch, lam, config, family)
        if solves is not None:
            solves.append((float(lam), res))
        out[float(lam)] = res.x
    return out


def kkt_violation(state: LassoState, batch: Batch, beta, lam: float, family: Family,
                  mask=None) -> float:
    """Largest violation of the lasso optimality conditions at ``beta``.

    With ``grad = -U~(beta) / (2 N_b)``: zero coordinates need
    ``|grad_k| <= lam``; active ones need ``grad_k + lam * sign(beta_k) == 0``.
    Unpenalized coordinates use ``lam = 0``.
    """
    beta = np.asarray(beta, dtype=float)
    n_total = state.n_total + batch.n
    grad = -aggregated_gradient(state, batch, beta, family) / (2.0 * n_total)
    return kkt_residual(grad, beta, lam, mask)


def kkt_residual(grad, x, lam, mask=None) -> float:
    grad = np.asarray(grad, dtype=float)
    x = np.asarray(x, dtype=float)
    lam_vec = np.full(x.shape, float(lam))
    if mask is not None:
        lam_vec = np.where(mask, lam_vec, 0.0)
    active = x != 0
    viol = np.where(active, np.abs(grad + lam_vec * np.sign(x)),
                    np.maximum(np.abs(grad) - lam_vec, 0.0))
    return float(viol.max()) if viol.size else 0.0


def theoretical_lambda(c: float, p: int, n_total: int) -> float:
    """Deterministic schedule ``C * sqrt(log p / N_b)``."""
    return float(c * np.sqrt(np.log(p) / n_total))
