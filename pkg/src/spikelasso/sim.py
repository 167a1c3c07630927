"""Conductance-based integrate-and-fire network with kinetic AMPA synapses.

Units throughout: time in ms, voltage in mV, capacitance in pF,
conductance in nS (synaptic ``gmax`` is given in pS and converted), current
in pA, transmitter concentration in mM.

The membrane model is a leaky integrate-and-fire surrogate for a detailed
granule-cell model: subthreshold dynamics are passive, and a crossing of
``spike_threshold`` emits a spike, paints ``spike_peak`` into the recorded
sample, then clamps the membrane at ``reset_potential`` for the refractory
period. Synapses follow the two-state receptor scheme

    dr/dt = r1 * T(t) * (1 - r) - r2 * r

driven by square transmitter pulses, with current ``gmax * r * (E - V)``.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numba import njit

from .errors import FormatError, NumericalError, ParameterError
from .graph import DirectedGraph


@dataclass(frozen=True)
class NeuronParams:
    membrane_capacitance: float = 10.0  # pF
    leak_conductance: float = 0.05  # nS
    leak_reversal: float = -70.0
    spike_threshold: float = -40.0
    reset_potential: float = -70.0
    refractory_period: float = 2.0
    bias_current_mean: float = 2.0  # pA
    bias_current_std: float = 0.2  # pA
    spike_peak: float | None = 30.0
    v_init: float | None = None  # defaults to leak_reversal

    def __post_init__(self):
        if self.membrane_capacitance <= 0 or self.leak_conductance <= 0:
            raise ParameterError("capacitance and leak conductance must be positive")
        if self.refractory_period < 0:
            raise ParameterError("refractory_period must be >= 0")
        if self.spike_threshold <= self.reset_potential:
            raise ParameterError("spike_threshold must exceed reset_potential")
        if self.bias_current_std < 0:
            raise ParameterError("bias_current_std must be >= 0")


@dataclass(frozen=True)
class SynapseParams:
    gmax: float = 800.0  # pS
    r1: float = 5.4
    r2: float = 0.84
    r6: float = 0.0
    transmitter_pulse_amplitude: float = 1.0
    transmitter_pulse_duration: float = 1.0
    reversal_potential: float = 0.0
    delay: float = 1.0

    def __post_init__(self):
        if self.gmax <= 0:
            raise ParameterError("gmax must be positive")
        if self.r1 < 0 or self.r2 < 0:
            raise ParameterError("rates r1, r2 must be >= 0")
        if self.r6 != 0:
            raise ParameterError("only the two-state scheme is supported (r6 must be 0)")
        if self.transmitter_pulse_duration <= 0:
            raise ParameterError("transmitter_pulse_duration must be positive")
        if self.transmitter_pulse_amplitude < 0 or self.delay < 0:
            raise ParameterError("pulse amplitude and delay must be >= 0")


AMPA = SynapseParams()
NOISE_AMPA = SynapseParams(gmax=500.0, r1=5.4, r2=0.1, r6=0.0, delay=0.0)


@dataclass(frozen=True)
class SimConfig:
    duration: float = 5000.0
    dt: float = 0.025
    noise_rate: float = 0.2  # Hz, per neuron
    seed: int = 0
    record_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ParameterError("dt must be positive")
        if self.duration < self.dt:
            raise ParameterError(f"duration must be >= dt, got {self.duration}")
        if self.noise_rate < 0:
            raise ParameterError("noise_rate must be >= 0")
        if self.record_stride < 1:
            raise ParameterError("record_stride must be a positive integer")


@dataclass
class VoltageTraces:
    """Recorded membrane potentials, ``values[sample, neuron]`` in mV.

    ``spike_times`` holds one sorted array per neuron, or ``None`` when the
    traces came from a file without spike annotations.
    """

    dt_record: float
    values: np.ndarray
    spike_times: list[np.ndarray] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_neurons(self) -> int:
        return self.values.shape[1]

    @property
    def duration(self) -> float:
        return (self.n_samples - 1) * self.dt_record

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt_record


def _steps(t, dt):
    return int(round(t / dt))


def open_fraction(onsets: Sequence[float], sp: SynapseParams, dt: float,
                  duration: float) -> np.ndarray:
    """Receptor open fraction on the grid ``k * dt`` for pulses at ``onsets``.

    ``onsets`` are transmitter release times (delay already applied). Uses
    the same exact exponential update as :func:`simulate`.
    """
    n_steps = _steps(duration, dt)
    dur = max(_steps(sp.transmitter_pulse_duration, dt), 1)
    on = np.zeros(n_steps + 1, dtype=bool)
    for t in onsets:
        k = _steps(t, dt)
        on[k:k + dur] = True
    e_on, rinf_on, e_off = _kinetic_constants(sp, dt)
    r = np.zeros(n_steps + 1)
    for k in range(n_steps):
        if on[k]:
            r[k + 1] = rinf_on + (r[k] - rinf_on) * e_on
        else:
            r[k + 1] = r[k] * e_off
    return r


def _kinetic_constants(sp: SynapseParams, dt: float):
    rate_on = sp.r1 * sp.transmitter_pulse_amplitude + sp.r2
    rinf_on = sp.r1 * sp.transmitter_pulse_amplitude / rate_on if rate_on > 0 else 0.0
    return np.exp(-rate_on * dt), rinf_on, np.exp(-sp.r2 * dt)


def simulate(g: DirectedGraph, neuron: NeuronParams = NeuronParams(),
             syn_edge: SynapseParams = AMPA, syn_noise: SynapseParams = NOISE_AMPA,
             cfg: SimConfig = SimConfig(),
             forced_spikes: Mapping[int, Sequence[float]] | None = None) -> VoltageTraces:
    """Integrate the network and return recorded traces with spike times.

    Parameters
    ----------
    g : DirectedGraph
        Connectivity. Edge weights scale ``syn_edge.gmax`` per edge.
    neuron, syn_edge, syn_noise, cfg
        Model and run parameters. Each neuron's bias current is drawn once
        from ``Normal(bias_current_mean, bias_current_std)``; each neuron's
        noise synapse is driven by an independent Poisson train at
        ``cfg.noise_rate``.
    forced_spikes : mapping, optional
        ``{neuron: times}`` of imposed spikes (stimulation). A forced spike
        is handled exactly like a threshold crossing; it is ignored while
        the neuron is refractory.

    Returns
    -------
    VoltageTraces

    Raises
    ------
    NumericalError
        When a membrane potential becomes non-finite; carries the first
        offending time and neuron.
    """
    n = g.n_nodes
    dt = cfg.dt
    n_steps = _steps(cfg.duration, dt)
    stride = cfg.record_stride
    rng = np.random.default_rng(cfg.seed)

    bias = rng.normal(neuron.bias_current_mean, neuron.bias_current_std, size=n)
    noise_on = np.zeros((n_steps + 1, n), dtype=bool)
    if cfg.noise_rate > 0:
        expected = cfg.noise_rate * cfg.duration / 1000.0
        for i in range(n):
            times = rng.uniform(0.0, cfg.duration, size=rng.poisson(expected))
            for k in np.round(times / dt).astype(int):
                noise_on[k, i] = True
    noise_dur = max(_steps(syn_noise.transmitter_pulse_duration, dt), 1)
    noise_delay = _steps(syn_noise.delay, dt)

    forced = np.zeros((n_steps + 1, n), dtype=bool)
    for i, times in (forced_spikes or {}).items():
        for t in times:
            k = _steps(t, dt)
            if 0 < k <= n_steps:
                forced[k, i] = True

    w_edge = g.weight_matrix() * (syn_edge.gmax * 1e-3)
    g_noise = syn_noise.gmax * 1e-3
    e_edge, e_noise = syn_edge.reversal_potential, syn_noise.reversal_potential
    on_e, rinf_e, off_e = _kinetic_constants(syn_edge, dt)
    on_n, rinf_n, off_n = _kinetic_constants(syn_noise, dt)
    edge_dur = max(_steps(syn_edge.transmitter_pulse_duration, dt), 1)
    edge_delay = _steps(syn_edge.delay, dt)
    amp_e = syn_edge.transmitter_pulse_amplitude > 0
    amp_n = syn_noise.transmitter_pulse_amplitude > 0

    v0 = neuron.leak_reversal if neuron.v_init is None else neuron.v_init
    peak = np.nan if neuron.spike_peak is None else float(neuron.spike_peak)
    values, spike_step, spike_neuron, n_spikes, bad_step, bad_neuron = _integrate(
        n_steps, stride, dt, float(v0), bias, w_edge, g_noise, e_edge, e_noise,
        neuron.membrane_capacitance, neuron.leak_conductance, neuron.leak_reversal,
        neuron.spike_threshold, neuron.reset_potential, _steps(neuron.refractory_period, dt),
        peak, on_e, rinf_e, off_e, on_n, rinf_n, off_n, edge_dur, edge_delay,
        noise_dur, noise_delay, amp_e, amp_n, noise_on, forced)
    if bad_step >= 0:
        raise NumericalError(
            f"non-finite membrane potential at t={bad_step * dt} ms, neuron {bad_neuron}",
            time=bad_step * dt, neuron=int(bad_neuron))
    spikes = [spike_step[:n_spikes][spike_neuron[:n_spikes] == i] * dt for i in range(n)]

    return VoltageTraces(
        dt_record=dt * stride,
        values=values,
        spike_times=spikes,
        meta={"bias_current": bias.tolist()},
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def spikes_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_spikes.csv")


def write_spikes(spike_times: Sequence[np.ndarray], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["neuron", "time_ms"])
        for i, times in enumerate(spike_times):
            for t in times:
                w.writerow([i, _fmt(t)])


def read_spikes(path, n_neurons: int) -> list[np.ndarray]:
    out: list[list[float]] = [[] for _ in range(n_neurons)]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["neuron", "time_ms"]:
            raise FormatError(f"expected header neuron,time_ms, got {header}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                i, t = int(row[0]), float(row[1])
                out[i].append(t)
            except (ValueError, IndexError) as exc:
                raise FormatError(f"bad spike row {row}", path, lineno) from exc
    return [np.sort(np.asarray(s, dtype=float)) for s in out]


def write_traces(tr: VoltageTraces, path, spikes_path=None) -> None:
    """Write ``time,v0,...`` CSV and, if present, the spike table beside it."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + [f"v{i}" for i in range(tr.n_neurons)])
        for k, row in enumerate(tr.values):
            w.writerow([_fmt(k * tr.dt_record)] + [_fmt(x) for x in row])
    if tr.spike_times is not None:
        write_spikes(tr.spike_times, spikes_path or spikes_path_for(path))


def read_traces(path, spikes_path=None, dt_record: float | None = None) -> VoltageTraces:
    """Inverse of :func:`write_traces`.

    Spike times are loaded from ``spikes_path`` (default: the sibling
    ``<stem>_spikes.csv``) when that file exists. ``dt_record`` is taken from
    the time column unless the file holds a single sample.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "time" or header[1:] != [
                f"v{i}" for i in range(len(header) - 1)]:
            raise FormatError(f"bad trace header {header}", path, 1)
        n = len(header) - 1
        times, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n + 1:
                raise FormatError(f"expected {n + 1} fields, got {len(row)}", path, lineno)
            try:
                vals = [float(x) for x in row]
            except ValueError as exc:
                raise FormatError(f"non-numeric field ({exc})", path, lineno) from exc
            times.append(vals[0])
            rows.append(vals[1:])
    if not rows:
        raise FormatError("trace file has no samples", path, 2)
    if dt_record is None:
        dt_record = times[1] - times[0] if len(times) > 1 else 0.0
    values = np.asarray(rows, dtype=float).reshape(len(rows), n)
    sp = Path(spikes_path) if spikes_path is not None else spikes_path_for(path)
    spike_times = read_spikes(sp, n) if sp.exists() else None
    return VoltageTraces(dt_record=dt_record, values=values, spike_times=spike_times)


def params_to_dict(obj) -> dict:
    return asdict(obj)


def params_from_dict(cls, doc: Mapping):
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ParameterError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**doc)


@njit(cache=True)
def _integrate(n_steps, stride, dt, v0, bias, w_edge, g_noise, e_edge, e_noise,
               c, gl, el, vth, vreset, ref_steps, peak, on_e, rinf_e, off_e,
               on_n, rinf_n, off_n, edge_dur, edge_delay, noise_dur, noise_delay,
               amp_e, amp_n, noise_on, forced):
    n = bias.shape[0]
    n_samples = n_steps // stride + 1
    values = np.empty((n_samples, n))
    max_spikes = n * (n_steps // (ref_steps + 1) + 1)
    spike_step = np.empty(max_spikes, dtype=np.int64)
    spike_neuron = np.empty(max_spikes, dtype=np.int64)
    n_spikes = 0
    ring = np.zeros((edge_delay + 1, n), dtype=np.bool_)
    edge_end = np.zeros(n, dtype=np.int64)
    noise_end = np.zeros(n, dtype=np.int64)
    ref_left = np.zeros(n, dtype=np.int64)
    r_edge = np.zeros(n)
    r_noise = np.zeros(n)
    v = np.full(n, v0)
    g_in = np.zeros(n)
    values[0] = v
    for k in range(n_steps):
        slot = k % (edge_delay + 1)
        for i in range(n):
            if ring[slot, i]:
                edge_end[i] = k + edge_dur
                ring[slot, i] = False
            if k >= noise_delay and noise_on[k - noise_delay, i]:
                noise_end[i] = k + noise_dur
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += r_edge[j] * w_edge[j, i]
            g_in[i] = acc
        record = (k + 1) % stride == 0
        row = (k + 1) // stride
        for i in range(n):
            current = gl * (el - v[i]) + bias[i] + g_in[i] * (e_edge - v[i]) \
                + g_noise * r_noise[i] * (e_noise - v[i])
            v[i] += dt / c * current
        for i in range(n):
            if amp_e and edge_end[i] > k:
                r_edge[i] = rinf_e + (r_edge[i] - rinf_e) * on_e
            else:
                r_edge[i] *= off_e
            if amp_n and noise_end[i] > k:
                r_noise[i] = rinf_n + (r_noise[i] - rinf_n) * on_n
            else:
                r_noise[i] *= off_n
        for i in range(n):
            if not np.isfinite(v[i]):
                return values, spike_step, spike_neuron, n_spikes, k + 1, i
            painted = False
            if ref_left[i] > 0:
                v[i] = vreset
                ref_left[i] -= 1
            elif v[i] >= vth or forced[k + 1, i]:
                v[i] = vreset
                ref_left[i] = ref_steps
                ring[(k + 1 + edge_delay) % (edge_delay + 1), i] = True
                spike_step[n_spikes] = k + 1
                spike_neuron[n_spikes] = i
                n_spikes += 1
                painted = not np.isnan(peak)
            if record:
                values[row, i] = peak if painted else v[i]
    return values, spike_step, spike_neuron, n_spikes, -1, -1
