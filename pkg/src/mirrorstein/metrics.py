"""Sample-quality metrics and run traces."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import log_expit, logsumexp

TRACE_HEADER = ("iter", "seconds", "energy_distance", "mksd2", "step_scale")


def energy_distance(X: np.ndarray, Y: np.ndarray) -> float:
    """V-statistic energy distance between two samples.

    ``2 E||x - y|| - E||x - x'|| - E||y - y'||`` with all means over full
    pairwise blocks, so the within-sample terms include zero self-distances.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if X.shape[0] == 0 or Y.shape[0] == 0:
        raise ValueError("samples must be non-empty")
    xy = cdist(X, Y).mean()
    xx = cdist(X, X).mean()
    yy = cdist(Y, Y).mean()
    return float(2.0 * xy - xx - yy)


def test_log_predictive(W: np.ndarray, X_test: np.ndarray, y_test: np.ndarray) -> float:
    """Mean log posterior-predictive probability of logistic-regression labels.

    Args:
        W: Particles, shape ``(n, d)``.
        X_test: Features, shape ``(m, d)``.
        y_test: Labels in ``{0, 1}``, shape ``(m,)``.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    X_test = np.atleast_2d(np.asarray(X_test, dtype=float))
    y_test = np.asarray(y_test, dtype=float)
    if X_test.shape[0] == 0:
        raise ValueError("empty test set")
    if W.shape[1] != X_test.shape[1] or y_test.shape != (X_test.shape[0],):
        raise ValueError("shape mismatch between particles, features and labels")
    z = X_test @ W.T  # (m, n)
    sign = np.where(y_test[:, None] == 1.0, 1.0, -1.0)
    logp = log_expit(sign * z)
    per_point = logsumexp(logp, axis=1) - np.log(W.shape[0])
    return float(per_point.mean())


@dataclass(frozen=True)
class TraceRow:
    """One diagnostic record; ``None`` marks a missing value."""

    iter: int
    seconds: Optional[float] = None
    energy_distance: Optional[float] = None
    mksd2: Optional[float] = None
    step_scale: Optional[float] = None


@dataclass
class RunTrace:
    """Ordered diagnostic rows with strictly increasing iterations."""

    rows: List[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        if self.rows and row.iter <= self.rows[-1].iter:
            raise ValueError("trace iterations must be strictly increasing")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[TraceRow]:
        return iter(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.rows],
            dtype=float,
        )

    @property
    def final(self) -> TraceRow:
        return self.rows[-1]


def _fmt(v: Optional[float]) -> str:
    return "" if v is None else format(float(v), ".17g")


def write_trace(trace: RunTrace, path) -> None:
    """Write a trace as CSV with a fixed header and 17-digit floats."""
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in trace:
            w.writerow(
                [str(int(r.iter)), _fmt(r.seconds), _fmt(r.energy_distance), _fmt(r.mksd2), _fmt(r.step_scale)]
            )


def read_trace(path) -> RunTrace:
    """Inverse of :func:`write_trace`."""
    trace = RunTrace()
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        for rec in reader:
            vals = [None if s == "" else float(s) for s in rec[1:]]
            trace.append(TraceRow(int(rec[0]), *vals))
    return trace


test_log_predictive.__test__ = False  # not a pytest test despite the name
