"""Data batches and the on-disk batch stream format.

A stream file is CSV.  The first line is the header ``y,x1,...,xp``;
batches are separated by lines reading ``#batch``.  A separator before the
first data row is allowed, and empty batches are kept (the engine treats
them as no-ops).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterator, TextIO

import numpy as np

from .errors import BatchFormatError, DimensionError

SEPARATOR = "#batch"


@dataclass(frozen=True)
class Batch:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=float)
        y = np.ascontiguousarray(self.y, dtype=float)
        if X.ndim != 2:
            raise DimensionError(f"batch design must be 2-d, got {X.shape}")
        if y.shape != (X.shape[0],):
            raise DimensionError(f"batch has {X.shape[0]} rows but {y.shape} responses")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def concat(batches) -> Batch:
    batches = list(batches)
    return Batch(np.vstack([b.X for b in batches]), np.concatenate([b.y for b in batches]))


def read_batches(fh: TextIO, intercept: bool = False) -> Iterator[Batch]:
    """Yield batches from a stream file one at a time.

    Only the batch being parsed is held in memory.  With ``intercept`` a
    leading column of ones is prepended to every design.
    """
    header = None
    rows: list[list[float]] = []
    lineno = 0
    started = False

    def emit():
        p = len(header) - 1
        if rows:
            arr = np.asarray(rows, dtype=float)
            y, X = arr[:, 0], arr[:, 1:]
        else:
            y, X = np.empty(0), np.empty((0, p))
        if intercept:
            X = np.hstack([np.ones((X.shape[0], 1)), X])
        return Batch(X, y)

    for line in fh:
        lineno += 1
        text = line.strip()
        if not text:
            continue
        if header is None:
            header = [h.strip() for h in next(csv.reader([text]))]
            if len(header) < 2 or header[0] != "y":
                raise BatchFormatError("header must read y,x1,...,xp", line=lineno)
            continue
        if text == SEPARATOR:
            if started:
                yield emit()
                rows = []
            started = True
            continue
        started = True
        fields = next(csv.reader([text]))
        if len(fields) != len(header):
            raise BatchFormatError(
                f"expected {len(header)} fields, found {len(fields)}", line=lineno)
        try:
            rows.append([float(v) for v in fields])
        except ValueError as exc:
            raise BatchFormatError(f"non-numeric field ({exc})", line=lineno) from None
    if header is not None and (rows or started):
        yield emit()


def write_batches(fh: TextIO, batches, names=None) -> None:
    batches = list(batches)
    if not batches:
        raise ValueError("no batches to write")
    p = batches[0].p
    names = names or [f"x{k + 1}" for k in range(p)]
    fh.write(",".join(["y", *names]) + "\n")
    for j, b in enumerate(batches):
        if j:
            fh.write(SEPARATOR + "\n")
        for yi, xi in zip(b.y, b.X):
            fh.write(",".join(repr(float(v)) for v in (yi, *xi)) + "\n")


def batches_to_text(batches, names=None) -> str:
    buf = io.StringIO()
    write_batches(buf, batches, names)
    return buf.getvalue()
