"""Pipeline configuration: one JSON document, validated section by section."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

from .errors import ParameterError
from .events import EventDetectorParams
from .sim import NOISE_AMPA, AMPA, NeuronParams, SimConfig, SynapseParams

# per-stage seed offsets from the master seed
SEED_OFFSETS = {"graph": 0, "sim": 1}

ABLATIONS = {
    "cond_i": (1,),
    "cond_ii": (2,),
    "cond_iii": (3,),
}


@dataclass(frozen=True)
class GraphConfig:
    n_nodes: int = 20
    p_connect: float = 0.3

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ParameterError("graph.n_nodes must be >= 2")
        if not 0 <= self.p_connect <= 1:
            raise ParameterError("graph.p_connect must lie in [0, 1]")


@dataclass(frozen=True)
class EventsConfig:
    detector: EventDetectorParams = field(default_factory=EventDetectorParams)
    delta: float = 1.0
    spike_threshold: float = -20.0
    spike_lockout: float = 2.0
    ablations: tuple[str, ...] = ("cond_i", "cond_ii", "cond_iii")

    def __post_init__(self):
        if self.delta <= 0:
            raise ParameterError("events.delta must be positive")
        object.__setattr__(self, "ablations", tuple(self.ablations))
        bad = [a for a in self.ablations if a not in ABLATIONS]
        if bad:
            raise ParameterError(f"unknown ablations {bad}; choose from {sorted(ABLATIONS)}")


@dataclass(frozen=True)
class LassoConfig:
    n_lambdas: int = 50
    lambda_min_ratio: float = 1e-3
    tol_kkt: float = 1e-4
    tol_step: float = 1e-7
    max_iter: int = 100_000
    weight_rule: str = "balance"
    topology_rule: str = "positive"
    shared_intercept: bool = False

    def __post_init__(self):
        if self.n_lambdas < 2:
            raise ParameterError("lasso.n_lambdas must be >= 2")
        if not 0 < self.lambda_min_ratio < 1:
            raise ParameterError("lasso.lambda_min_ratio must lie in (0, 1)")
        if self.weight_rule not in ("balance", "none"):
            raise ParameterError("lasso.weight_rule must be 'balance' or 'none'")
        if self.topology_rule not in ("positive", "nonzero"):
            raise ParameterError("lasso.topology_rule must be 'positive' or 'nonzero'")
        if self.tol_kkt <= 0 or self.tol_step <= 0 or self.max_iter < 1:
            raise ParameterError("lasso tolerances must be positive")

    def solver(self) -> dict:
        return {"tol_kkt": self.tol_kkt, "tol_step": self.tol_step, "max_iter": self.max_iter}


@dataclass(frozen=True)
class XcorrConfig:
    max_lag: int = 10

    def __post_init__(self):
        if self.max_lag < 1:
            raise ParameterError("xcorr.max_lag must be >= 1")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    graph: GraphConfig = field(default_factory=GraphConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    neuron: NeuronParams = field(default_factory=NeuronParams)
    synapse: SynapseParams = AMPA
    noise_synapse: SynapseParams = NOISE_AMPA
    events: EventsConfig = field(default_factory=EventsConfig)
    lasso: LassoConfig = field(default_factory=LassoConfig)
    xcorr: XcorrConfig = field(default_factory=XcorrConfig)

    def stage_seed(self, stage: str) -> int:
        return self.seed + SEED_OFFSETS[stage]

    def sim_config(self) -> SimConfig:
        return replace(self.sim, seed=self.stage_seed("sim"))

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["events"]["detector"]["use_condition"] = list(self.events.detector.use_condition)
        doc["events"]["ablations"] = list(self.events.ablations)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _build(cls, doc: Any, where: str):
    if not isinstance(doc, dict):
        raise ParameterError(f"{where} must be an object")
    known = {f.name: f for f in fields(cls)}
    unknown = set(doc) - set(known)
    if unknown:
        raise ParameterError(f"unknown keys in {where}: {sorted(unknown)}")
    kwargs = {}
    for name, value in doc.items():
        sub = _NESTED.get((cls, name))
        kwargs[name] = _build(sub, value, f"{where}.{name}") if sub else value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ParameterError(f"{where}: {exc}") from exc


_NESTED = {
    (PipelineConfig, "graph"): GraphConfig,
    (PipelineConfig, "sim"): SimConfig,
    (PipelineConfig, "neuron"): NeuronParams,
    (PipelineConfig, "synapse"): SynapseParams,
    (PipelineConfig, "noise_synapse"): SynapseParams,
    (PipelineConfig, "events"): EventsConfig,
    (PipelineConfig, "lasso"): LassoConfig,
    (PipelineConfig, "xcorr"): XcorrConfig,
    (EventsConfig, "detector"): EventDetectorParams,
}


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_override(text: str) -> dict:
    """``"sim.duration=1000"`` -> ``{"sim": {"duration": 1000}}``.

    The value is parsed as JSON and falls back to a plain string.
    """
    if "=" not in text:
        raise ParameterError(f"override {text!r} is not of the form key.path=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    doc: dict = {}
    node = doc
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return doc


def load_config(doc: dict | None = None, overrides: list[str] = (), seed: int | None = None
                ) -> PipelineConfig:
    """Defaults, then ``doc``, then ``overrides``, then ``seed``; fully validated."""
    merged = PipelineConfig().to_dict()
    if doc:
        merged = _merge(merged, doc)
    for text in overrides:
        merged = _merge(merged, parse_override(text))
    if seed is not None:
        merged["seed"] = seed
    if isinstance(merged.get("events", {}).get("detector", {}).get("use_condition"), list):
        merged["events"]["detector"]["use_condition"] = tuple(
            merged["events"]["detector"]["use_condition"])
    return _build(PipelineConfig, merged, "config")


def read_config(path, overrides: list[str] = (), seed: int | None = None) -> PipelineConfig:
    doc = None
    if path is not None:
        with open(path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                from .errors import FormatError
                raise FormatError(f"bad config JSON ({exc.msg})", path, exc.lineno) from exc
    return load_config(doc, overrides, seed)
