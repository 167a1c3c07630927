"""Cross-correlation baseline on binned spike trains.

For an ordered pair ``(i, j)`` and a positive lag ``tau`` (in bins)

    CC[i, j](tau) = sum_m ST_i[m] * ST_j[m + tau] / sqrt(N_i * N_j)

where ``N_i`` is the spike count of train ``i``. The bracket in the usual
notation is read as a plain sum, so a train correlated with a copy of
itself shifted by ``tau`` peaks at exactly 1. Only lags ``1 .. max_lag``
are scanned: ``i`` leading ``j`` is evidence for the edge ``i -> j``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .evaluation import RankedEdgeList
from .events import BinaryProcessMatrix
from .graph import DirectedGraph


@dataclass
class CorrelationResult:
    """Peak correlation ``peak_value[i, j]`` at lag ``peak_lag[i, j]``.

    ``empty[i, j]`` flags pairs where one of the trains has no spikes; those
    get peak 0 and lag 0. The diagonal is unused.
    """

    peak_value: np.ndarray
    peak_lag: np.ndarray
    max_lag: int
    empty: np.ndarray

    @property
    def n_neurons(self) -> int:
        return self.peak_value.shape[0]


def coincidences(a: np.ndarray, b: np.ndarray, lag: int) -> int:
    """``sum_m a[m] * b[m + lag]`` for any integer lag (zero outside range)."""
    n = len(a)
    if lag >= 0:
        return int(np.dot(a[: n - lag], b[lag:])) if lag < n else 0
    return coincidences(b, a, -lag)


def cross_correlate(x: BinaryProcessMatrix, max_lag: int = 10) -> CorrelationResult:
    """Peak of the normalized cross-correlogram over lags ``1 .. max_lag``."""
    if max_lag < 1:
        raise ParameterError("max_lag must be a positive integer")
    if max_lag >= x.n_bins:
        raise ParameterError(f"max_lag={max_lag} must be < number of bins ({x.n_bins})")
    st = x.values.astype(np.float64)
    counts = st.sum(axis=0)
    n = st.shape[1]
    norm = np.sqrt(np.outer(counts, counts))
    empty = norm == 0
    cc = np.empty((max_lag, n, n))
    for tau in range(1, max_lag + 1):
        raw = st[:-tau].T @ st[tau:]  # raw[i, j] = sum_m ST_i[m] ST_j[m + tau]
        with np.errstate(invalid="ignore", divide="ignore"):
            cc[tau - 1] = np.where(empty, 0.0, raw / np.where(empty, 1.0, norm))
    best = np.argmax(cc, axis=0)  # first maximum = smallest lag
    peak = np.take_along_axis(cc, best[None], axis=0)[0]
    lag = np.where(empty, 0, best + 1)
    np.fill_diagonal(peak, 0.0)
    np.fill_diagonal(lag, 0)
    return CorrelationResult(peak, lag, max_lag, empty)


def topology_from_threshold(cr: CorrelationResult, threshold: float) -> DirectedGraph:
    """Edges whose peak strictly exceeds ``threshold``."""
    if threshold < 0:
        raise ParameterError("threshold must be >= 0")
    keep = cr.peak_value > threshold
    np.fill_diagonal(keep, False)
    src, tgt = np.nonzero(keep)
    return DirectedGraph(cr.n_neurons, zip(src.tolist(), tgt.tolist()))


def rank_pairs(cr: CorrelationResult, tag: str = "xcorr") -> RankedEdgeList:
    """All ordered pairs by descending peak, then smaller lag, then index.

    Pairs involving an empty train go last.
    """
    n = cr.n_neurons
    pairs = [(s, t) for s in range(n) for t in range(n) if s != t]
    pairs.sort(key=lambda e: (bool(cr.empty[e]), -cr.peak_value[e], cr.peak_lag[e], e))
    # empty-train pairs have peak 0 already, so scores stay nonincreasing
    return RankedEdgeList([(s, t, float(cr.peak_value[s, t])) for s, t in pairs], tag)


def write_result(cr: CorrelationResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "tgt", "peak", "lag"])
        for s in range(cr.n_neurons):
            for t in range(cr.n_neurons):
                if s != t:
                    w.writerow([s, t, repr(float(cr.peak_value[s, t])), int(cr.peak_lag[s, t])])
