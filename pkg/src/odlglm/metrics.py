"""Monte-Carlo summary metrics.

Kept apart from the replication code so that edits here never
invalidate cached replications.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from .inference import normal_quantile

if TYPE_CHECKING:
    from .sim import ReplicationResult, SimConfig

GROUPS = ("0", "0.01", "1")
# rows of the metrics CSV; group cells also carry MAE and an error count
METRICS = ("A.bias", "ASE", "ESE", "CP", "ACL")
KKT_TOL = 1e-4


def group_metrics(est: np.ndarray, se: np.ndarray, truth: np.ndarray, z: float) -> dict:
    """Metrics for one group; ``est`` and ``se`` are (replications, coords).

    ``A.bias`` is the absolute empirical bias ``|mean_reps(est) - truth|``
    averaged over the group; ``MAE`` is the mean absolute error.  Other
    averages run over coordinates first, then replications.  Failed
    records (NaN) are skipped.
    """
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        err = est - truth
        cover = np.where(np.isnan(est) | np.isnan(se), np.nan,
                         (np.abs(err) <= z * se).astype(float))
        abias = np.nanmean(np.abs(np.nanmean(err, axis=0)))
        mae = np.nanmean(np.nanmean(np.abs(err), axis=1))
        ase = np.nanmean(np.nanmean(se, axis=1))
        if est.shape[0] > 1:
            ese = np.nanmean(np.nanstd(est, axis=0, ddof=1))
        else:
            ese = float("nan")
        cp = np.nanmean(np.nanmean(cover, axis=1))
        acl = np.nanmean(np.nanmean(2 * z * se, axis=1))
    return {"A.bias": float(abias), "MAE": float(mae), "ASE": float(ase), "ESE": float(ese), "CP": float(cp),
            "ACL": float(acl)}


@dataclass
class MetricsTable:
    """Group metrics per method and batch index.

    ``cells[(method, batch_index, group)]`` is a dict with the five
    metrics plus ``errors``.  ``method`` is ``"odl"``, ``"mle"`` or
    ``"offline"``; the comparison methods use the final batch index.
    """

    cells: dict
    report_at: tuple
    lambda_hist: dict
    kkt: dict
    timing: dict
    replications: int
    mle_medians: dict = field(default_factory=dict)

    def get(self, method: str, b: int, group: str) -> dict:
        return self.cells[(method, b, group)]

    def to_json(self) -> dict:
        return {
            "replications": self.replications,
            "report_at": list(self.report_at),
            "cells": [dict(method=m, batch_index=b, group=g, **v)
                      for (m, b, g), v in self.cells.items()],
            "lambda_histogram": {str(b): {repr(k): v for k, v in h.items()}
                                 for b, h in self.lambda_hist.items()},
            "kkt": self.kkt,
            "timing": self.timing,
            "mle_medians": self.mle_medians,
        }


def summarize(config: SimConfig, results: Sequence[ReplicationResult]) -> MetricsTable:
    z = float(normal_quantile(0.5 + config.engine.ci_level / 2))
    truth = config.true_beta()
    groups = config.groups()
    cells = {}
    for i, b in enumerate(config.report_at):
        est = np.array([r.est[i] for r in results])
        se = np.array([r.se[i] for r in results])
        errs = sum(int(r.n_errors[i]) for r in results)
        for g, idx in groups.items():
            if idx.size == 0:
                continue
            m = group_metrics(est[:, idx], se[:, idx], truth[idx], z)
            m["errors"] = errs
            cells[("odl", b, g)] = m
    last = config.n_batches
    medians = {}
    for method, attr_est, attr_se in (("mle", "mle_beta", "mle_se"),
                                      ("offline", "offline_est", "offline_se")):
        if getattr(results[0], attr_est) is None:
            continue
        est = np.array([getattr(r, attr_est) for r in results])
        se = np.array([getattr(r, attr_se) for r in results])
        for g, idx in groups.items():
            if idx.size == 0:
                continue
            m = group_metrics(est[:, idx], se[:, idx], truth[idx], z)
            m["errors"] = int(np.isnan(est[:, idx]).sum())
            cells[(method, last, g)] = m
            if method == "mle":
                with np.errstate(all="ignore"):
                    medians[g] = {"A.bias": float(np.median(np.abs(est[:, idx] - truth[idx]))),
                                  "ASE": float(np.median(se[:, idx]))}
    hist = {}
    for b in range(1, last + 1):
        vals, counts = np.unique([r.lambdas[b - 1] for r in results], return_counts=True)
        hist[b] = {float(v): int(c) for v, c in zip(vals, counts)}
    kkt = {"max_violation": max(r.kkt_max for r in results),
           "checked": sum(r.kkt_count for r in results),
           "failures": sum(r.kkt_failures for r in results),
           "unconverged": sum(r.unconverged for r in results),
           "tolerance": KKT_TOL}
    secs = [r.seconds for r in results]
    timing = {"total_seconds": float(sum(secs)), "seconds_per_replication": float(np.mean(secs))}
    return MetricsTable(cells, tuple(config.report_at), hist, kkt, timing, len(results), medians)


def standardized_errors(config: SimConfig, results: Sequence[ReplicationResult],
                        b: Optional[int] = None, group: str = "0") -> np.ndarray:
    """Pooled ``(est - truth) / se`` over replications and group coordinates."""
    b = config.report_at[-1] if b is None else b
    i = config.report_at.index(b)
    idx = config.groups()[group]
    truth = config.true_beta()[idx]
    z = np.concatenate([(r.est[i, idx] - truth) / r.se[i, idx] for r in results])
    return z[np.isfinite(z)]
