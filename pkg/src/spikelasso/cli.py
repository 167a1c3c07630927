"""Command-line pipeline: simulate -> detect -> infer / baseline -> evaluate.

Every stage reads and writes files in a working directory, so any stage can
be re-run on its own::

    spikelasso simulate --out run/
    spikelasso detect   --out run/
    spikelasso detect   --out run/ --tag cond_iii
    spikelasso infer    --out run/ [--tag cond_iii]
    spikelasso baseline --out run/
    spikelasso evaluate --out run/ --ranked run/ranked_lasso.csv --truth run/truth.json
    spikelasso pipeline --out run/     # all of the above, plus ablations
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation, events, graph, lasso, sim, xcorr
from .config import ABLATIONS, PipelineConfig, read_config
from .errors import DataError, FormatError, ParameterError

log = logging.getLogger("spikelasso")

TRACES = "traces.csv"
SPIKES = "spikes.csv"
TRUTH = "truth.json"


def _suffix(tag: str | None) -> str:
    return f"_{tag}" if tag else ""


def cmd_simulate(cfg: PipelineConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    g = graph.generate_random(cfg.graph.n_nodes, cfg.graph.p_connect, cfg.stage_seed("graph"))
    tr = sim.simulate(g, cfg.neuron, cfg.synapse, cfg.noise_synapse, cfg.sim_config())
    g.to_json(out / TRUTH)
    graph.write_csv(g, out / "truth.csv")
    sim.write_traces(tr, out / TRACES, spikes_path=out / SPIKES)
    (out / "config.json").write_text(cfg.to_json() + "\n")
    log.info("simulated %d neurons, %d edges, %d spikes", g.n_nodes, len(g),
             sum(len(s) for s in tr.spike_times))
    return {"n_edges": len(g), "n_spikes": int(sum(len(s) for s in tr.spike_times))}


def _detector(cfg: PipelineConfig, tag: str | None) -> events.EventDetectorParams:
    det = cfg.events.detector
    if tag:
        if tag not in ABLATIONS:
            raise ParameterError(f"unknown ablation tag {tag!r}")
        det = det.only(*ABLATIONS[tag])
    return det


def cmd_detect(cfg: PipelineConfig, src: Path, out: Path, tag: str | None = None,
               dense: bool = False, traces: sim.VoltageTraces | None = None) -> dict:
    if traces is None:
        traces = sim.read_traces(src / TRACES, spikes_path=src / SPIKES)
    spikes = events.detect_spikes(traces, cfg.events.spike_threshold, cfg.events.spike_lockout)
    evs = events.detect_events(traces, _detector(cfg, tag))
    x, y = events.bin_processes(spikes, evs, traces.n_neurons, traces.duration, cfg.events.delta)
    out.mkdir(parents=True, exist_ok=True)
    name = f"raster{_suffix(tag)}"
    events.write_raster(x, y, out / f"{name}.csv", dense=dense)
    meta = {"n_neurons": x.n_neurons, "n_bins": x.n_bins, "delta": x.delta,
            "duration": traces.duration, "tag": tag or "",
            "n_spikes": int(x.values.sum()), "n_events": int(y.values.sum())}
    (out / f"{name}.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
    return meta


def _load_raster(src: Path, tag: str | None):
    name = f"raster{_suffix(tag)}"
    meta_path = src / f"{name}.json"
    try:
        meta = json.loads(meta_path.read_text())
    except FileNotFoundError as exc:
        raise FormatError("missing raster metadata; run `detect` first", meta_path) from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad JSON ({exc.msg})", meta_path, exc.lineno) from exc
    return events.read_raster(src / f"{name}.csv", meta["n_neurons"], meta["n_bins"],
                              meta["delta"])


def cmd_infer(cfg: PipelineConfig, src: Path, out: Path, tag: str | None = None) -> dict:
    x, y = _load_raster(src, tag)
    lc = cfg.lasso
    problem = lasso.build_problem(x, y, lc.weight_rule)
    path = lasso.fit_path(problem, lc.n_lambdas, lc.lambda_min_ratio,
                          shared_intercept=lc.shared_intercept, **lc.solver())
    method = f"lasso{_suffix(tag)}"
    ranked = lasso.rank_edges(path, lc.topology_rule, tag=method)
    out.mkdir(parents=True, exist_ok=True)
    ranked.write_csv(out / f"ranked_{method}.csv")
    with open(out / f"path_{method}.csv", "w") as fh:
        lasso.write_path_summary(problem, path, fh)
    (out / f"fits_{method}.json").write_text(lasso.path_to_json(path) + "\n")
    return {"method": method, "n_ranked": len(ranked),
            "worst_kkt": max(f.kkt for f in path.fits)}


def cmd_baseline(cfg: PipelineConfig, src: Path, out: Path) -> dict:
    x, _ = _load_raster(src, None)
    cr = xcorr.cross_correlate(x, cfg.xcorr.max_lag)
    out.mkdir(parents=True, exist_ok=True)
    xcorr.write_result(cr, out / "xcorr.csv")
    ranked = xcorr.rank_pairs(cr, tag="xcorr")
    ranked.write_csv(out / "ranked_xcorr.csv")
    return {"method": "xcorr", "n_ranked": len(ranked)}


def cmd_evaluate(ranked_paths, truth_path: Path, out: Path) -> dict:
    truth = graph.read_json(truth_path)
    out.mkdir(parents=True, exist_ok=True)
    results = {}
    for p in ranked_paths:
        p = Path(p)
        tag = p.stem[len("ranked_"):] if p.stem.startswith("ranked_") else p.stem
        ranked = evaluation.RankedEdgeList.read_csv(p, tag)
        curves = evaluation.evaluate(ranked, truth)
        evaluation.write_curves(curves, out / f"curves_{tag}.csv")
        doc = evaluation.summary(curves, ranked, truth)
        evaluation.write_summary(doc, out / f"summary_{tag}.json")
        results[tag] = doc
    return results


def cmd_pipeline(cfg: PipelineConfig, out: Path, threads: int = 1) -> dict:
    cmd_simulate(cfg, out)
    traces = sim.read_traces(out / TRACES, spikes_path=out / SPIKES)
    tags = [None] + list(cfg.events.ablations)
    for tag in tags:
        cmd_detect(cfg, out, out, tag, traces=traces)
    with ThreadPoolExecutor(max_workers=max(threads, 1)) as pool:
        list(pool.map(lambda t: cmd_infer(cfg, out, out, t), tags))
    cmd_baseline(cfg, out, out)
    ranked = [out / f"ranked_lasso{_suffix(t)}.csv" for t in tags] + [out / "ranked_xcorr.csv"]
    results = cmd_evaluate(ranked, out / TRUTH, out)
    evaluation.write_summary(results, out / "summary.json")
    return results


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON configuration document")
    common.add_argument("--out", type=Path, default=Path("run"), help="working directory")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config field, e.g. sim.duration=1000")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="spikelasso", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate a random network")
    d = sub.add_parser("detect", parents=[common], help="detect spikes and events, bin them")
    d.add_argument("--in", dest="src", type=Path, help="trace directory (default: --out)")
    d.add_argument("--tag", choices=sorted(ABLATIONS), help="single-condition ablation")
    d.add_argument("--dense", action="store_true", help="write dense 0/1 matrices")
    i = sub.add_parser("infer", parents=[common], help="fit the lasso path")
    i.add_argument("--in", dest="src", type=Path)
    i.add_argument("--tag", choices=sorted(ABLATIONS))
    b = sub.add_parser("baseline", parents=[common], help="cross-correlation baseline")
    b.add_argument("--in", dest="src", type=Path)
    e = sub.add_parser("evaluate", parents=[common], help="ROC/PPC curves")
    e.add_argument("--ranked", type=Path, action="append", required=True)
    e.add_argument("--truth", type=Path, required=True)
    sub.add_parser("pipeline", parents=[common], help="run every stage")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    stage = args.command
    try:
        cfg = read_config(args.config, args.overrides, args.seed)
        src = getattr(args, "src", None) or args.out
        if stage == "simulate":
            result = cmd_simulate(cfg, args.out)
            print(cfg.to_json())
        elif stage == "detect":
            result = cmd_detect(cfg, src, args.out, args.tag, args.dense)
        elif stage == "infer":
            result = cmd_infer(cfg, src, args.out, args.tag)
        elif stage == "baseline":
            result = cmd_baseline(cfg, src, args.out)
        elif stage == "evaluate":
            result = cmd_evaluate(args.ranked, args.truth, args.out)
        else:
            result = cmd_pipeline(cfg, args.out, args.threads)
    except (ParameterError, DataError, FormatError, ArithmeticError, RuntimeError,
            OSError) as exc:
        print(f"error [{stage}]: {exc}", file=sys.stderr)
        return 2
    if stage != "simulate":
        print(json.dumps(result, indent=2, sort_keys=True, default=_jsonable))
    return 0


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(type(obj))


if __name__ == "__main__":
    sys.exit(main())
