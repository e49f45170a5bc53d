"""Online debiased lasso engine.

One :class:`OnlineDebiasedLasso` instance consumes batches in arrival
order.  For each batch it picks the penalty, advances the lasso chain,
solves the tracked nodewise projections on the updated information,
folds the batch into the per-coordinate accumulators and reports Wald
inference.  Raw batches are never retained.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import lasso as lasso_mod
from .batch import Batch
from .errors import DegenerateProjection, DimensionError, SnapshotError, SolverDivergence
from .family import BERNOULLI, Family, batch_information, deviance, get_family
from .inference import (CoordAccumulator, InferenceRecord, VarianceMode, accumulate,
                        confidence_interval, debiased_estimate, standard_error,
                        wald_pvalue)
from .lasso import LassoState
from .projection import TAU_FLOOR_FACTOR, ProjectionState, solve_projections, tau
from .prox import ProxConfig

log = logging.getLogger(__name__)

DEFAULT_GRID = (1e-4, 1e-3, 0.01, 0.05)
# beyond this width the tracked set must be given explicitly
AUTO_TRACK_MAX_P = 600
CV_FOLDS = 5


@dataclass
class EngineConfig:
    """Settings for :class:`OnlineDebiasedLasso`.

    ``tracked_coords=None`` tracks every coordinate (allowed for
    ``p <= 600``).  ``lambda_mode="schedule"`` replaces adaptive tuning by
    ``schedule_c * sqrt(log p / N_b)``.
    """

    family: Family = BERNOULLI
    lambda_grid: Sequence[float] = DEFAULT_GRID
    prox: ProxConfig = field(default_factory=ProxConfig)
    tracked_coords: Optional[Sequence[int]] = None
    ci_level: float = 0.95
    variance_mode: VarianceMode = VarianceMode.AS_WRITTEN
    intercept: bool = False
    lambda_mode: str = "adaptive"
    schedule_c: float = 1.0
    cv_folds: int = CV_FOLDS

    def __post_init__(self):
        self.family = get_family(self.family)
        self.lambda_grid = tuple(sorted(float(v) for v in self.lambda_grid))
        if not self.lambda_grid:
            raise ValueError("lambda_grid must be nonempty")
        if any(v < 0 for v in self.lambda_grid):
            raise ValueError("lambda_grid values must be nonnegative")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must lie in (0, 1)")
        self.variance_mode = VarianceMode(self.variance_mode)
        if self.lambda_mode not in ("adaptive", "schedule"):
            raise ValueError("lambda_mode must be 'adaptive' or 'schedule'")
        if self.tracked_coords is not None:
            self.tracked_coords = tuple(int(r) for r in self.tracked_coords)

    def to_json(self) -> dict:
        return {
            "family": self.family.kind.value,
            "lambda_grid": list(self.lambda_grid),
            "learning_rate": self.prox.learning_rate,
            "stop_tol": self.prox.stop_tol,
            "max_iter": int(self.prox.max_iter),
            "tracked_coords": None if self.tracked_coords is None else list(self.tracked_coords),
            "ci_level": self.ci_level,
            "variance_mode": self.variance_mode.value,
            "intercept": self.intercept,
            "lambda_mode": self.lambda_mode,
            "schedule_c": self.schedule_c,
            "cv_folds": self.cv_folds,
        }

    @classmethod
    def from_json(cls, d: dict) -> "EngineConfig":
        d = dict(d)
        prox = ProxConfig(d.pop("learning_rate"), d.pop("stop_tol"), d.pop("max_iter"))
        return cls(prox=prox, **d)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _penalty_mask(config: EngineConfig, p: int):
    if not config.intercept:
        return None
    mask = np.ones(p, dtype=bool)
    mask[0] = False
    return mask


def _prox_for(config: EngineConfig, p: int) -> ProxConfig:
    mask = _penalty_mask(config, p)
    if mask is None:
        return config.prox
    return ProxConfig(config.prox.learning_rate, config.prox.stop_tol, config.prox.max_iter, mask)


def _pick(values: dict) -> float:
    """Smallest score; ties go to the larger lambda."""
    best = min(values.values())
    return max(lam for lam, v in values.items() if v <= best)


def prediction_errors(candidates: dict, batch: Batch, family: Family) -> dict:
    from .family import mean_clamped
    return {lam: float(np.mean((batch.y - mean_clamped(family, batch.X @ beta)) ** 2))
            for lam, beta in candidates.items()}


def select_lambda(state: LassoState, batch: Batch, family: Family) -> float:
    """Grid value whose previous-step estimate predicts the new batch best."""
    if not state.candidate_betas:
        raise ValueError("no candidate estimates; select_lambda needs b >= 1")
    return _pick(prediction_errors(state.candidate_betas, batch, family))


def cv_folds(n: int, k: int):
    """Index-stride folds; leave-one-out when ``n < k``."""
    k = n if n < k else k
    idx = np.arange(n)
    return [idx[idx % k == f] for f in range(k)]


def initial_lambda(first: Batch, config: EngineConfig) -> float:
    """Cross-validated deviance over the grid on the first batch."""
    grid = config.lambda_grid
    if len(grid) == 1:
        return grid[0]
    if first.n < 2:
        log.warning("first batch has %d rows; using the largest lambda", first.n)
        return grid[-1]
    if first.n < config.cv_folds:
        log.info("first batch has %d < %d rows; leave-one-out cross-validation",
                 first.n, config.cv_folds)
    family = config.family
    prox = _prox_for(config, first.p)
    folds = cv_folds(first.n, config.cv_folds)
    scores = {lam: 0.0 for lam in grid}
    for test in folds:
        train = np.setdiff1d(np.arange(first.n), test)
        tb = Batch(first.X[train], first.y[train])
        empty = LassoState(first.p)
        for lam in grid:
            beta = lasso_mod.solve_surrogate(empty, tb, lam, prox, family).x
            scores[lam] += deviance(family, first.X[test], first.y[test], beta)
    return _pick(scores)


class OnlineDebiasedLasso:
    """Streaming estimator; feed batches with :meth:`process_batch`."""

    def __init__(self, config: EngineConfig, p: int):
        self.config = config
        self.p = int(p)
        if config.tracked_coords is None:
            if self.p > AUTO_TRACK_MAX_P:
                raise ValueError(f"p={p} > {AUTO_TRACK_MAX_P}: pass tracked_coords explicitly")
            tracked = tuple(range(self.p))
        else:
            tracked = config.tracked_coords
        for r in tracked:
            if not 0 <= r < self.p:
                raise IndexError(f"tracked coordinate {r} out of range for p={p}")
        self.tracked = tuple(tracked)
        self.lasso = LassoState(self.p)
        self.projections = {r: ProjectionState(r, np.zeros(self.p - 1)) for r in self.tracked}
        self.accumulators = {r: CoordAccumulator(r, self.p) for r in self.tracked}
        self.lambda_history: list[float] = []
        self._prox = _prox_for(config, self.p)
        # per-batch solver results, for convergence diagnostics only
        self.last_solves: dict = {}

    @property
    def b(self) -> int:
        return self.lasso.b

    @property
    def n_total(self) -> int:
        return self.lasso.n_total

    def _choose_lambda(self, batch: Batch) -> float:
        cfg = self.config
        if cfg.lambda_mode == "schedule":
            return lasso_mod.theoretical_lambda(cfg.schedule_c, self.p,
                                                self.lasso.n_total + batch.n)
        if self.lasso.b == 0:
            return initial_lambda(batch, cfg)
        return select_lambda(self.lasso, batch, cfg.family)

    def process_batch(self, batch: Batch) -> list[InferenceRecord]:
        """Absorb one batch and return one record per tracked coordinate."""
        if batch.p != self.p:
            raise DimensionError(f"batch has {batch.p} columns, engine expects {self.p}")
        if batch.n == 0:
            log.warning("empty batch ignored at step %d", self.lasso.b)
            return []
        cfg = self.config
        family = cfg.family
        family.check_response(batch.y)
        if self.lasso.b == 0 and batch.n < math.log(self.p):
            log.warning("first batch has n=%d < log p=%.2f", batch.n, math.log(self.p))

        lam = self._choose_lambda(batch)
        solves: list = []
        grid = list(cfg.lambda_grid)
        if cfg.lambda_mode == "schedule":
            grid = [lam]
        candidates = lasso_mod.update_candidates(self.lasso, batch, grid, self._prox,
                                                 family, solves=solves)
        beta_b = candidates[float(lam)]
        new_lasso = lasso_mod.commit(self.lasso, batch, beta_b, family)
        new_lasso.candidate_betas = candidates
        info_batch = batch_information(family, batch.X, beta_b)
        n_total = new_lasso.n_total
        b = new_lasso.b

        proj_solves = {}
        records = []
        floor = TAU_FLOOR_FACTOR * n_total
        solved = solve_projections(new_lasso.info_agg, n_total, lam, self.tracked,
                                   {r: pr.gamma_hat for r, pr in self.projections.items()},
                                   cfg.prox)
        for r in self.tracked:
            prev = self.projections[r]
            error = None
            res = solved[r]
            if isinstance(res, SolverDivergence):
                gamma = prev.gamma_hat
                error = str(res)
            else:
                gamma = res.x
                proj_solves[r] = res
            acc = accumulate(self.accumulators[r], batch, beta_b, gamma, family,
                             info_batch=info_batch, variance_mode=cfg.variance_mode)
            self.accumulators[r] = acc
            try:
                t = tau(new_lasso.info_agg, gamma, r, n_total=n_total)
            except DegenerateProjection as exc:
                t = float("nan")
                error = error or str(exc)
            self.projections[r] = ProjectionState(r, gamma, t)
            if error is None:
                est = debiased_estimate(acc, beta_b, t, floor)
                se = standard_error(acc, t, floor)
                lo, hi = confidence_interval(est, se, cfg.ci_level)
                pval = wald_pvalue(est, se)
            else:
                est = se = lo = hi = pval = float("nan")
            records.append(InferenceRecord(b, r, float(beta_b[r]), est, se, lo, hi, pval,
                                           float(lam), error))
        self.lasso = new_lasso
        self.lambda_history.append(float(lam))
        self.last_solves = {"lasso": solves, "projection": proj_solves, "lambda": float(lam)}
        return records

    # ------------------------------------------------------------------
    # snapshots

    def snapshot(self) -> bytes:
        return encode_snapshot(self)

    @classmethod
    def restore(cls, data: bytes) -> "OnlineDebiasedLasso":
        return decode_snapshot(data)


MAGIC = b"ODLSNAP\x00"
VERSION = 1
_FAMILY_CODES = {"bernoulli-logit": 0, "gaussian-identity": 1, "poisson-log": 2}


def _checksum(data: bytes) -> int:
    return struct.unpack("<Q", hashlib.blake2b(data, digest_size=8).digest())[0]


def _pack_array(arr) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8").ravel()
    return struct.pack("<Q", arr.size) + arr.tobytes()


def encode_snapshot(engine: OnlineDebiasedLasso) -> bytes:
    """Serialize engine state.

    Layout (little-endian): magic, u32 version, u64 p, u64 b, u64 N,
    u8 family, u32 grid size, grid f64s, u64-length JSON settings block,
    then length-prefixed f64 arrays, then a u64 blake2b checksum over all
    preceding bytes.
    """
    cfg = engine.config
    lz = engine.lasso
    grid = cfg.lambda_grid
    parts = [MAGIC, struct.pack("<IQQQBI", VERSION, engine.p, lz.b, lz.n_total,
                                _FAMILY_CODES[cfg.family.kind.value], len(grid))]
    parts.append(struct.pack(f"<{len(grid)}d", *grid))
    meta = {"config": cfg.to_json(), "tracked": list(engine.tracked),
            "digest": cfg.digest(), "candidates": sorted(lz.candidate_betas)}
    blob = json.dumps(meta, sort_keys=True).encode()
    parts.append(struct.pack("<Q", len(blob)) + blob)
    arrays = [np.asarray(engine.lambda_history, dtype=float), lz.beta_hat, lz.info_agg]
    arrays += [lz.candidate_betas[k] for k in sorted(lz.candidate_betas)]
    for r in engine.tracked:
        pr = engine.projections[r]
        acc = engine.accumulators[r]
        arrays += [pr.gamma_hat, [pr.tau_hat, acc.s1, acc.s2, acc.v], acc.S_row]
    parts += [_pack_array(a) for a in arrays]
    body = b"".join(parts)
    return body + struct.pack("<Q", _checksum(body))


def decode_snapshot(data: bytes) -> OnlineDebiasedLasso:
    data = bytes(data)
    if len(data) < len(MAGIC) + 8 or data[:len(MAGIC)] != MAGIC:
        raise SnapshotError("not an engine snapshot (bad magic)")
    body, tail = data[:-8], data[-8:]
    if struct.unpack("<Q", tail)[0] != _checksum(body):
        raise SnapshotError("checksum mismatch (truncated or corrupted snapshot)")
    off = len(MAGIC)
    head = struct.Struct("<IQQQBI")
    version, p, b, n_total, _fam, ngrid = head.unpack_from(body, off)
    if version != VERSION:
        raise SnapshotError(f"snapshot version {version} is not supported (expected {VERSION})")
    off += head.size
    off += 8 * ngrid
    (mlen,) = struct.unpack_from("<Q", body, off)
    off += 8
    meta = json.loads(body[off:off + mlen].decode())
    off += mlen

    def next_array():
        nonlocal off
        (size,) = struct.unpack_from("<Q", body, off)
        off += 8
        arr = np.frombuffer(body, dtype="<f8", count=size, offset=off).astype(float)
        off += 8 * size
        return arr

    cfg = EngineConfig.from_json(meta["config"])
    if cfg.digest() != meta["digest"]:
        raise SnapshotError("configuration digest mismatch")
    eng = OnlineDebiasedLasso(cfg, p)
    eng.tracked = tuple(meta["tracked"])
    eng.lambda_history = [float(v) for v in next_array()]
    lz = LassoState(p, b=b, n_total=n_total)
    lz.beta_hat = next_array()
    lz.info_agg = next_array().reshape(p, p)
    lz.candidate_betas = {float(k): next_array() for k in meta["candidates"]}
    eng.lasso = lz
    eng.projections = {}
    eng.accumulators = {}
    for r in eng.tracked:
        gamma = next_array()
        tau_hat, s1, s2, v = next_array()
        S_row = next_array()
        eng.projections[r] = ProjectionState(r, gamma, float(tau_hat))
        eng.accumulators[r] = CoordAccumulator(r, p, float(s1), float(s2), S_row, float(v))
    if off != len(body):
        raise SnapshotError("trailing bytes in snapshot")
    if len(eng.lambda_history) != b:
        raise SnapshotError("lambda history length disagrees with batch count")
    return eng
