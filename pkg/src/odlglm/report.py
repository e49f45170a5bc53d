"""Per-coordinate p-value traces, interval bands and trace AUC."""

from __future__ import annotations

import csv
from collections import defaultdict
from typing import Sequence, TextIO

import numpy as np

from .errors import SchemaError
from .inference import neglog10_pvalue

RECORD_COLUMNS = ("batch_index", "coord", "lambda", "beta_lasso", "beta_debiased", "se",
                  "ci_low", "ci_high", "p_value")


def trace_auc(batch_index: Sequence[float], p_values: Sequence[float]) -> float:
    """Trapezoid area of ``-log10 p`` over batch index, divided by the index span.

    A single-point trace returns its own height.
    """
    x = np.asarray(batch_index, dtype=float)
    if x.size == 0:
        raise ValueError("empty trace")
    h = np.array([neglog10_pvalue(p) for p in p_values])
    order = np.argsort(x, kind="stable")
    x, h = x[order], h[order]
    span = x[-1] - x[0]
    if span == 0:
        return float(h.mean())
    return float(np.trapezoid(h, x) / span)


def read_records(fh: TextIO) -> list[dict]:
    reader = csv.DictReader(fh)
    missing = [c for c in RECORD_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(f"records file is missing columns: {', '.join(missing)}")
    rows = []
    for line, row in enumerate(reader, start=2):
        try:
            rec = {c: float(row[c]) for c in RECORD_COLUMNS}
        except (TypeError, ValueError):
            raise SchemaError(f"line {line}: unparsable numeric field") from None
        rec["batch_index"] = int(rec["batch_index"])
        rec["coord"] = int(rec["coord"])
        rows.append(rec)
    return rows


def by_coordinate(records: Sequence[dict]) -> dict:
    out = defaultdict(list)
    for rec in records:
        out[rec["coord"]].append(rec)
    for rows in out.values():
        rows.sort(key=lambda r: r["batch_index"])
    return dict(sorted(out.items()))


def build_report(records: Sequence[dict]) -> dict:
    """Rows for the trace, band and AUC tables.

    Records with a NaN p-value (failed coordinates) are left out of the
    traces and the AUC.
    """
    traces, bands, aucs = [], [], []
    for coord, rows in by_coordinate(records).items():
        ok = [r for r in rows if not np.isnan(r["p_value"])]
        for r in ok:
            traces.append((r["batch_index"], coord, neglog10_pvalue(r["p_value"])))
        for r in rows:
            bands.append((r["batch_index"], coord, r["beta_debiased"], r["ci_low"], r["ci_high"]))
        if ok:
            aucs.append((coord, trace_auc([r["batch_index"] for r in ok],
                                          [r["p_value"] for r in ok])))
    return {"traces": traces, "bands": bands, "auc": aucs}
