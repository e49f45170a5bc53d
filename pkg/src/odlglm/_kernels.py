"""Compiled inner loops for the two hot proximal-gradient solves.

Both kernels run exactly the iteration of :func:`odlglm.prox.prox_solve`
(gradient step, soft-threshold on penalized coordinates, stop on the
step length) but without a Python callback per iteration.  The test
suite checks them against the generic solver.

Status codes: 0 converged, 1 iteration cap reached, 2 objective rose on
``DIVERGE_PATIENCE`` consecutive iterations, 3 non-finite gradient.
"""

import numpy as np
from numba import njit

CONVERGED = 0
MAX_ITER = 1
DIVERGED = 2
NONFINITE = 3

DIVERGE_PATIENCE = 10
# relative slack so roundoff on a plateau is not counted as a rise
RISE_SLACK = 1e-12

BERNOULLI = 0
GAUSSIAN = 1
POISSON = 2

ETA_CLAMP = 700.0


@njit(cache=True)
def _mean_and_nll(kind, t, y):
    """Mean g(t) and log-likelihood kernel contribution at one observation."""
    if kind == GAUSSIAN:
        return t, 0.5 * (y - t) * (y - t)
    if t > ETA_CLAMP:
        t = ETA_CLAMP
    elif t < -ETA_CLAMP:
        t = -ETA_CLAMP
    if kind == BERNOULLI:
        if t >= 0.0:
            e = np.exp(-t)
            mu = 1.0 / (1.0 + e)
            sp = t + np.log1p(e)
        else:
            e = np.exp(t)
            mu = e / (1.0 + e)
            sp = np.log1p(e)
        return mu, sp - y * t
    mu = np.exp(t)
    return mu, mu - y * t


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def glm_surrogate_ista(X, y, kind, info_hist, anchor, n_total, lam, penalized,
                       x0, eta, tol, max_iter):
    """Minimize (nll(beta) + q(beta)) / (2 N) + lam * |beta|_1 over masked coords.

    ``q`` is the quadratic history term
    ``0.5 (beta - anchor)' info_hist (beta - anchor)``; pass a zero matrix
    for a plain (offline) penalized likelihood.
    """
    n, p = X.shape
    beta = x0.copy()
    new = np.empty(p)
    grad = np.empty(p)
    diff = np.empty(p)
    resid = np.empty(n)
    scale = 1.0 / (2.0 * n_total)
    prev_obj = np.inf
    rises = 0
    for it in range(max_iter):
        for k in range(p):
            diff[k] = beta[k] - anchor[k]
        hist = info_hist @ diff
        loss = 0.0
        for i in range(n):
            t = 0.0
            for k in range(p):
                t += X[i, k] * beta[k]
            mu, l = _mean_and_nll(kind, t, y[i])
            resid[i] = y[i] - mu
            loss += l
        score = X.T @ resid
        quad = 0.0
        pen = 0.0
        for k in range(p):
            quad += diff[k] * hist[k]
            if penalized[k]:
                pen += abs(beta[k])
        obj = (loss + 0.5 * quad) * scale + lam * pen
        for k in range(p):
            grad[k] = (hist[k] - score[k]) * scale
            if not np.isfinite(grad[k]):
                return beta, it, NONFINITE
        if obj > prev_obj + RISE_SLACK * max(1.0, abs(prev_obj)):
            rises += 1
            if rises >= DIVERGE_PATIENCE:
                return beta, it, DIVERGED
        else:
            rises = 0
        prev_obj = obj
        step2 = 0.0
        for k in range(p):
            z = beta[k] - eta * grad[k]
            if penalized[k]:
                z = _soft(z, eta * lam)
            new[k] = z
            d = z - beta[k]
            step2 += d * d
        for k in range(p):
            beta[k] = new[k]
        if np.sqrt(step2) <= tol:
            return beta, it + 1, CONVERGED
    return beta, max_iter, MAX_ITER


@njit(cache=True)
def projection_ista(info, r, n_total, lam, w0, eta, tol, max_iter):
    """Nodewise projection on an information matrix, in extended form.

    ``w`` is the length-p vector with ``w[r] == -1`` held fixed and the
    remaining entries the projection coefficients.  Minimizes
    ``w' info w / (2 N) + lam * |w_{-r}|_1``.
    """
    p = info.shape[0]
    w = w0.copy()
    w[r] = -1.0
    new = np.empty(p)
    inv_n = 1.0 / n_total
    prev_obj = np.inf
    rises = 0
    for it in range(max_iter):
        jw = info @ w
        quad = 0.0
        pen = 0.0
        for k in range(p):
            quad += w[k] * jw[k]
            if k != r:
                pen += abs(w[k])
        obj = 0.5 * quad * inv_n + lam * pen
        if obj > prev_obj + RISE_SLACK * max(1.0, abs(prev_obj)):
            rises += 1
            if rises >= DIVERGE_PATIENCE:
                return w, it, DIVERGED
        else:
            rises = 0
        prev_obj = obj
        step2 = 0.0
        for k in range(p):
            if k == r:
                new[k] = -1.0
                continue
            g = jw[k] * inv_n
            if not np.isfinite(g):
                return w, it, NONFINITE
            z = _soft(w[k] - eta * g, eta * lam)
            new[k] = z
            d = z - w[k]
            step2 += d * d
        for k in range(p):
            w[k] = new[k]
        if np.sqrt(step2) <= tol:
            return w, it + 1, CONVERGED
    return w, max_iter, MAX_ITER


@njit(cache=True)
def projection_ista_block(info, rs, n_total, lam, W0, eta, tol, max_iter):
    """:func:`projection_ista` for many coordinates at once.

    Row ``j`` of ``W0`` is the extended start for coordinate ``rs[j]``.
    Each iteration is one matrix product over the still-active rows; a
    row leaves the active set as soon as its own solve terminates, so
    every row follows the single-coordinate iteration.  Returns the
    final rows, iteration counts and status codes.
    """
    p = info.shape[0]
    m = rs.shape[0]
    out = W0.copy()
    iters = np.full(m, max_iter, dtype=np.int64)
    status = np.full(m, MAX_ITER, dtype=np.int64)
    for j in range(m):
        out[j, rs[j]] = -1.0
    active = np.arange(m)
    W = out.copy()
    prev_obj = np.full(m, np.inf)
    rises = np.zeros(m, dtype=np.int64)
    info_t = np.ascontiguousarray(info.T)
    inv_n = 1.0 / n_total
    new = np.empty(p)
    thr = eta * lam
    finished = np.zeros(m, dtype=np.bool_)
    for it in range(max_iter):
        n_act = active.shape[0]
        if n_act == 0:
            break
        JW = W @ info_t
        any_done = False
        for a in range(n_act):
            j = active[a]
            r = rs[j]
            # one pass: objective at the current row and the candidate step
            quad = 0.0
            pen = 0.0
            step2 = 0.0
            for k in range(p):
                quad += W[a, k] * JW[a, k]
            for k in range(r):
                wk = W[a, k]
                pen += abs(wk)
                u = wk - eta * (JW[a, k] * inv_n)
                z = u - min(max(u, -thr), thr)
                new[k] = z
                step2 += (z - wk) * (z - wk)
            new[r] = -1.0
            for k in range(r + 1, p):
                wk = W[a, k]
                pen += abs(wk)
                u = wk - eta * (JW[a, k] * inv_n)
                z = u - min(max(u, -thr), thr)
                new[k] = z
                step2 += (z - wk) * (z - wk)
            obj = 0.5 * quad * inv_n + lam * pen
            if obj > prev_obj[j] + RISE_SLACK * max(1.0, abs(prev_obj[j])):
                rises[j] += 1
                if rises[j] >= DIVERGE_PATIENCE:
                    status[j] = DIVERGED
                    iters[j] = it
                    finished[j] = True
                    any_done = True
                    continue
            else:
                rises[j] = 0
            prev_obj[j] = obj
            if not np.isfinite(step2):
                status[j] = NONFINITE
                iters[j] = it
                finished[j] = True
                any_done = True
                continue
            for k in range(p):
                W[a, k] = new[k]
            if np.sqrt(step2) <= tol:
                status[j] = CONVERGED
                iters[j] = it + 1
                finished[j] = True
                any_done = True
        if any_done:
            keep = 0
            for a in range(n_act):
                j = active[a]
                if finished[j]:
                    for k in range(p):
                        out[j, k] = W[a, k]
                else:
                    keep += 1
            W2 = np.empty((keep, p))
            act2 = np.empty(keep, dtype=np.int64)
            c = 0
            for a in range(n_act):
                j = active[a]
                if not finished[j]:
                    for k in range(p):
                        W2[c, k] = W[a, k]
                    act2[c] = j
                    c += 1
            W = W2
            active = act2
    for a in range(active.shape[0]):
        j = active[a]
        for k in range(p):
            out[j, k] = W[a, k]
    return out, iters, status
