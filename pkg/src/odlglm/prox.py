"""Iterative soft-thresholding for ``f(beta) + lam * |beta|_1``.

The solver takes a fixed learning rate (no line search, no acceleration)
and stops once a full proximal step moves the iterate by at most
``stop_tol`` in the Euclidean norm.  When no coordinate is thresholded the
step is exactly ``eta * grad f``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import _kernels
from .errors import SolverDivergence


@dataclass(frozen=True)
class ProxConfig:
    """Settings for :func:`prox_solve`.

    Parameters
    ----------
    learning_rate : float
        Fixed gradient step ``eta``.
    stop_tol : float
        Stop when ``||beta_new - beta||_2 <= stop_tol``.
    max_iter : int
        Iteration cap.  Hitting it is reported through the ``converged``
        flag, not raised.
    penalty_mask : array of bool, optional
        True where the l1 penalty applies.  ``None`` penalizes everything.
    """

    learning_rate: float = 0.005
    stop_tol: float = 1e-6
    max_iter: int = 100_000
    penalty_mask: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.stop_tol > 0:
            raise ValueError("stop_tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if self.penalty_mask is not None:
            object.__setattr__(self, "penalty_mask", np.asarray(self.penalty_mask, dtype=bool))

    def mask_for(self, p: int) -> np.ndarray:
        if self.penalty_mask is None:
            return np.ones(p, dtype=bool)
        if self.penalty_mask.shape != (p,):
            raise ValueError(f"penalty_mask has shape {self.penalty_mask.shape}, expected ({p},)")
        return self.penalty_mask


class ProxResult(NamedTuple):
    x: np.ndarray
    iterations: int
    converged: bool


def soft_threshold(z, t):
    """Soft-thresholding operator S(z; t) = sign(z) * max(|z| - t, 0)."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be nonnegative")
    out = np.sign(z) * np.maximum(np.abs(z) - t, 0.0)
    return out if np.ndim(out) else float(out)


def prox_solve(
    grad: Callable[[np.ndarray], np.ndarray],
    init,
    lam: float,
    config: ProxConfig = ProxConfig(),
    objective: Optional[Callable[[np.ndarray], float]] = None,
    callback: Optional[Callable[[int, np.ndarray], None]] = None,
) -> ProxResult:
    """Minimize ``f + lam * ||beta_masked||_1`` by proximal gradient steps.

    Parameters
    ----------
    grad : callable
        Gradient of the smooth part ``f``.
    init : array
        Starting point (copied).
    lam : float
        Penalty level, ``>= 0``.
    config : ProxConfig
    objective : callable, optional
        Smooth part ``f``.  When given, ten consecutive increases of the
        composite objective abort with :class:`SolverDivergence`.
    callback : callable, optional
        Called as ``callback(k, beta)`` after every iteration.

    Returns
    -------
    ProxResult
        ``(x, iterations, converged)``.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    x = np.array(init, dtype=float, copy=True)
    mask = config.mask_for(x.shape[0]) if x.ndim == 1 else np.ones(x.shape, dtype=bool)
    eta = config.learning_rate
    thresh = eta * lam

    def composite(v):
        return objective(v) + lam * np.abs(v[mask]).sum()

    prev = composite(x) if objective is not None else None
    rises = 0
    for k in range(int(config.max_iter)):
        g = np.asarray(grad(x), dtype=float)
        if not np.all(np.isfinite(g)):
            raise SolverDivergence(f"non-finite gradient at iteration {k}", iteration=k)
        z = x - eta * g
        new = np.where(mask, np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0), z)
        step = np.linalg.norm(new - x)
        x = new
        if callback is not None:
            callback(k, x)
        if objective is not None:
            cur = composite(x)
            if cur > prev + _kernels.RISE_SLACK * max(1.0, abs(prev)):
                rises += 1
                if rises >= _kernels.DIVERGE_PATIENCE:
                    raise SolverDivergence(
                        f"objective increased {rises} consecutive iterations (at {k})",
                        iteration=k)
            else:
                rises = 0
            prev = cur
        if step <= config.stop_tol:
            return ProxResult(x, k + 1, True)
    return ProxResult(x, int(config.max_iter), False)


def check_kernel_status(status: int, iterations: int, what: str) -> bool:
    """Translate a compiled-kernel status code; returns the converged flag."""
    if status == _kernels.NONFINITE:
        raise SolverDivergence(f"{what}: non-finite gradient at iteration {iterations}",
                               iteration=iterations)
    if status == _kernels.DIVERGED:
        raise SolverDivergence(f"{what}: objective increased {_kernels.DIVERGE_PATIENCE} "
                               f"consecutive iterations (at {iterations})", iteration=iterations)
    return status == _kernels.CONVERGED
