"""Spike and derivative-event detection, and binning into 0/1 processes.

An event on a voltage trace marks the onset of an excitatory upswing. At
every interior sample the left and right slopes are estimated by
least-squares lines over ``deriv_window`` samples on each side, and the
sample qualifies when all enabled conditions hold:

    (i)   right >= right_deriv_threshold        (rising after the sample)
    (ii)  right - left >= deriv_jump_threshold  (convex kink)
    (iii) left >= left_deriv_threshold          (not on a falling flank)

Each maximal run of qualifying samples gives one event at its first sample.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError, FormatError, ParameterError
from .sim import VoltageTraces

Occurrence = tuple[int, float]


@dataclass(frozen=True)
class EventDetectorParams:
    right_deriv_threshold: float = 1.0  # mV/ms
    deriv_jump_threshold: float = 1.0  # mV/ms
    left_deriv_threshold: float = -1.0  # mV/ms
    use_condition: tuple[bool, bool, bool] = (True, True, True)
    deriv_window: int = 5

    def __post_init__(self):
        object.__setattr__(self, "use_condition", tuple(bool(c) for c in self.use_condition))
        if self.right_deriv_threshold <= 0:
            raise ParameterError("right_deriv_threshold must be positive")
        if self.deriv_jump_threshold <= 0:
            raise ParameterError("deriv_jump_threshold must be positive")
        if self.left_deriv_threshold >= 0:
            raise ParameterError("left_deriv_threshold must be negative")
        if len(self.use_condition) != 3 or not any(self.use_condition):
            raise ParameterError("use_condition needs three flags, at least one set")
        if int(self.deriv_window) < 1:
            raise ParameterError("deriv_window must be a positive integer")

    def only(self, *conditions: int) -> "EventDetectorParams":
        """Copy with just the given conditions (1-based: 1, 2, 3) enabled."""
        flags = tuple(c in conditions for c in (1, 2, 3))
        return EventDetectorParams(self.right_deriv_threshold, self.deriv_jump_threshold,
                                   self.left_deriv_threshold, flags, self.deriv_window)


@dataclass(frozen=True)
class BinaryProcessMatrix:
    """Binned 0/1 indicators, ``values[bin, neuron]``.

    Row ``m`` (0-based) covers the interval ``(m * delta, (m + 1) * delta]``.
    """

    delta: float
    values: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("spike", "event"):
            raise ParameterError(f"kind must be 'spike' or 'event', got {self.kind!r}")
        vals = np.asarray(self.values)
        if vals.ndim != 2 or not np.isin(vals, (0, 1)).all():
            raise DataError("values must be a 2-D 0/1 matrix")
        object.__setattr__(self, "values", vals.astype(np.int8))

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    @property
    def n_neurons(self) -> int:
        return self.values.shape[1]


def detect_spikes(tr: VoltageTraces, threshold: float = -20.0,
                  lockout: float = 2.0) -> list[Occurrence]:
    """Spike list ``(neuron, time)`` sorted by neuron then time.

    Uses the simulator's recorded spike times when present; otherwise finds
    upward crossings of ``threshold``, locating each crossing by linear
    interpolation between samples and ignoring crossings within ``lockout``
    ms of the previous spike.
    """
    if tr.spike_times is not None:
        return [(i, float(t)) for i, times in enumerate(tr.spike_times) for t in times]
    out = []
    v = tr.values
    for i in range(tr.n_neurons):
        up = np.flatnonzero((v[:-1, i] < threshold) & (v[1:, i] >= threshold))
        last = -np.inf
        for k in up:
            frac = (threshold - v[k, i]) / (v[k + 1, i] - v[k, i])
            t = (k + frac) * tr.dt_record
            if t - last >= lockout:
                out.append((i, float(t)))
                last = t
    return out


def _ls_slope_kernel(window: int, dt: float) -> np.ndarray:
    k = np.arange(window + 1, dtype=float)
    k -= k.mean()
    return k / (np.dot(k, k) * dt)


def one_sided_slopes(v: np.ndarray, window: int, dt: float):
    """Left and right least-squares slopes at the interior samples.

    For sample ``t`` in ``[window, n - 1 - window]`` the left slope fits
    ``v[t - window : t + 1]`` and the right slope ``v[t : t + window + 1]``.
    Works on the first axis, so ``v`` may be ``(samples,)`` or
    ``(samples, neurons)``.
    """
    v = np.asarray(v, dtype=float)
    c = _ls_slope_kernel(window, dt)
    # slopes[j] fits samples j .. j + window
    slopes = np.tensordot(sliding_window_view(v, window + 1, axis=0), c, axes=([-1], [0]))
    n = v.shape[0]
    left = slopes[: n - 2 * window]
    right = slopes[window:n - window]
    return left, right


def qualifying_samples(v: np.ndarray, dt: float, p: EventDetectorParams) -> np.ndarray:
    """Boolean mask over the interior samples ``window .. n-1-window``."""
    left, right = one_sided_slopes(v, p.deriv_window, dt)
    q = np.ones(left.shape, dtype=bool)
    c1, c2, c3 = p.use_condition
    if c1:
        q &= right >= p.right_deriv_threshold
    if c2:
        q &= (right - left) >= p.deriv_jump_threshold
    if c3:
        q &= left >= p.left_deriv_threshold
    return q


def detect_events(tr: VoltageTraces, p: EventDetectorParams = EventDetectorParams()
                  ) -> list[Occurrence]:
    """Derivative-based events ``(neuron, time)``, one per qualifying run."""
    w = p.deriv_window
    if tr.n_samples < 2 * w + 1:
        raise ParameterError(
            f"trace has {tr.n_samples} samples, need at least {2 * w + 1}")
    q = qualifying_samples(tr.values, tr.dt_record, p)
    start = q.copy()
    start[1:] &= ~q[:-1]
    idx, neuron = np.nonzero(start)
    order = np.lexsort((idx, neuron))
    return [(int(neuron[o]), float((idx[o] + w) * tr.dt_record)) for o in order]


def bin_index(t: float, delta: float) -> int:
    """0-based row of the bin ``(m * delta, (m + 1) * delta]`` holding ``t``.

    ``t = 0`` goes to the first bin. A relative slack of 1e-9 absorbs
    rounding in times built as ``step * dt``.
    """
    return max(math.ceil(t / delta - 1e-9) - 1, 0)


def bin_occurrences(occ: Sequence[Occurrence], n_neurons: int, duration: float,
                    delta: float, kind: str) -> BinaryProcessMatrix:
    if delta <= 0:
        raise ParameterError("delta must be positive")
    n_bins = int(math.floor(duration / delta + 1e-9))
    vals = np.zeros((n_bins, n_neurons), dtype=np.int8)
    for i, t in occ:
        if not 0 <= i < n_neurons:
            raise DataError(f"neuron {i} outside [0, {n_neurons})")
        if t < 0 or t > duration * (1 + 1e-12):
            raise DataError(f"time {t} outside [0, {duration}]")
        m = bin_index(t, delta)
        if m < n_bins:  # trailing partial bin is dropped
            vals[m, i] = 1
    return BinaryProcessMatrix(delta, vals, kind)


def bin_processes(spikes: Sequence[Occurrence], events: Sequence[Occurrence],
                  n_neurons: int, duration: float, delta: float = 1.0):
    """Bin spikes into ``x`` and events into ``y``; repeats within a bin collapse."""
    x = bin_occurrences(spikes, n_neurons, duration, delta, "spike")
    y = bin_occurrences(events, n_neurons, duration, delta, "event")
    return x, y


def write_raster(x: BinaryProcessMatrix, y: BinaryProcessMatrix, path,
                 dense: bool = False) -> None:
    """Sparse ``neuron,bin_index,kind`` rows, or dense 0/1 matrices.

    With ``dense=True`` two files are written: ``<stem>_spike.csv`` and
    ``<stem>_event.csv``, each a bins x neurons matrix without header.
    """
    path = Path(path)
    if dense:
        for m in (x, y):
            np.savetxt(path.with_name(f"{path.stem}_{m.kind}.csv"), m.values,
                       fmt="%d", delimiter=",")
        return
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["neuron", "bin_index", "kind"])
        for m in (x, y):
            neurons, bins = np.nonzero(m.values.T)
            for i, b in zip(neurons, bins):
                w.writerow([int(i), int(b), m.kind])


def read_raster(path, n_neurons: int, n_bins: int, delta: float):
    """Inverse of the sparse :func:`write_raster`; returns ``(x, y)``."""
    mats = {"spike": np.zeros((n_bins, n_neurons), dtype=np.int8),
            "event": np.zeros((n_bins, n_neurons), dtype=np.int8)}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["neuron", "bin_index", "kind"]:
            raise FormatError(f"bad raster header {header}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                i, b, kind = int(row[0]), int(row[1]), row[2]
                mats[kind][b, i] = 1
            except (ValueError, IndexError, KeyError) as exc:
                raise FormatError(f"bad raster row {row}", path, lineno) from exc
    return (BinaryProcessMatrix(delta, mats["spike"], "spike"),
            BinaryProcessMatrix(delta, mats["event"], "event"))
