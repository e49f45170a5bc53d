"""Nodewise low-dimensional projection on the aggregated information.

For a coordinate ``r`` the projection coefficients minimize

    (J_rr - 2 J_{r,-r} gamma + gamma' J_{-r,-r} gamma) / (2 N_b) + lam ||gamma||_1

which only touches blocks of the stored information matrix.  The
extended vector ``gamma~`` carries ``-1`` in slot ``r`` and ``gamma``
elsewhere; the objective is then ``gamma~' J gamma~ / (2 N_b)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DegenerateProjection, DimensionError, SolverDivergence
from .prox import ProxConfig, ProxResult, check_kernel_status

TAU_FLOOR_FACTOR = 1e-8


@dataclass
class ProjectionState:
    r: int
    gamma_hat: np.ndarray
    tau_hat: float = float("nan")

    @property
    def extended(self) -> np.ndarray:
        return extend(self.gamma_hat, self.r)


def extend(gamma, r: int) -> np.ndarray:
    """Insert ``-1`` at position ``r``."""
    gamma = np.asarray(gamma, dtype=float)
    return np.insert(gamma, r, -1.0)


def drop(extended, r: int) -> np.ndarray:
    return np.delete(np.asarray(extended, dtype=float), r)


def solve_projection(info_agg, n_total: float, lam: float, r: int, init=None,
                     config: ProxConfig = ProxConfig()) -> ProxResult:
    """Projection solve; ``x`` of the result has length ``p - 1``."""
    info_agg = np.asarray(info_agg, dtype=float)
    p = info_agg.shape[0]
    if info_agg.shape != (p, p):
        raise DimensionError(f"information matrix must be square, got {info_agg.shape}")
    if not 0 <= r < p:
        raise IndexError(f"coordinate {r} out of range for p={p}")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    w0 = np.zeros(p) if init is None else extend(init, r)
    w, iters, status = _kernels.projection_ista(
        info_agg, int(r), float(n_total), float(lam), w0,
        float(config.learning_rate), float(config.stop_tol), int(config.max_iter))
    converged = check_kernel_status(status, iters, f"projection solve (r={r})")
    return ProxResult(drop(w, r), int(iters), converged)


def solve_projections(info_agg, n_total: float, lam: float, coords, inits=None,
                      config: ProxConfig = ProxConfig()) -> dict:
    """Projection solves for several coordinates in one blocked kernel call.

    Returns ``{r: ProxResult}``; a coordinate whose solve diverged maps to
    the :class:`SolverDivergence` instance instead.
    """
    info_agg = np.ascontiguousarray(info_agg, dtype=float)
    p = info_agg.shape[0]
    if info_agg.shape != (p, p):
        raise DimensionError(f"information matrix must be square, got {info_agg.shape}")
    rs = np.asarray(list(coords), dtype=np.int64)
    if rs.size and (rs.min() < 0 or rs.max() >= p):
        raise IndexError(f"coordinates out of range for p={p}")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    W0 = np.zeros((rs.size, p))
    for j, r in enumerate(rs):
        if inits is not None and inits.get(int(r)) is not None:
            W0[j] = extend(inits[int(r)], r)
    W, iters, status = _kernels.projection_ista_block(
        info_agg, rs, float(n_total), float(lam), W0,
        float(config.learning_rate), float(config.stop_tol), int(config.max_iter))
    out = {}
    for j, r in enumerate(rs):
        try:
            converged = check_kernel_status(int(status[j]), int(iters[j]),
                                            f"projection solve (r={r})")
            out[int(r)] = ProxResult(drop(W[j], r), int(iters[j]), converged)
        except SolverDivergence as exc:
            out[int(r)] = exc
    return out


def update_projection(info_agg, n_total: float, lam: float, r: int, init=None,
                      config: ProxConfig = ProxConfig()) -> np.ndarray:
    return solve_projection(info_agg, n_total, lam, r, init, config).x


def projection_gradient(info_agg, n_total: float, gamma, r: int) -> np.ndarray:
    """Gradient ``(J_{-r,-r} gamma - J_{-r,r}) / N_b`` of the smooth part."""
    info_agg = np.asarray(info_agg, dtype=float)
    return drop(info_agg @ extend(gamma, r), r) / n_total


def residual_column(X, gamma, r: int) -> np.ndarray:
    """``z_r = x_r - X_{-r} gamma`` on the raw (unweighted) columns."""
    X = np.asarray(X, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (X.shape[1] - 1,):
        raise DimensionError(f"gamma has shape {gamma.shape}, expected ({X.shape[1] - 1},)")
    return -(X @ extend(gamma, r))


def tau(info_agg, gamma, r: int, n_total: float | None = None,
        floor_factor: float = TAU_FLOOR_FACTOR) -> float:
    """``tau_r = J_rr - J_{r,-r} gamma``; raises when it is not above the floor.

    The floor is ``floor_factor * N_b`` when ``n_total`` is given, else
    ``floor_factor``.
    """
    info_agg = np.asarray(info_agg, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    value = float(info_agg[r, r] - np.delete(info_agg[r], r) @ gamma)
    floor = floor_factor * (n_total if n_total is not None else 1.0)
    if not value > floor:
        raise DegenerateProjection(r, value, floor)
    return value
