"""ROC and PPC scoring of ranked edge lists against a known graph.

The candidate universe is every ordered non-self pair of nodes. A ranking
is swept prefix by prefix: the top ``k`` edges are declared present.
PPC at ``k`` is ``(TP - FP) / (TP + FP)``, i.e. ``2 * precision - 1``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, DegenerateDataError, FormatError
from .graph import DirectedGraph, count_bidirectional


@dataclass
class RankedEdgeList:
    """Edges ``(source, target, score)`` from most to least confident."""

    edges: list[tuple[int, int, float]]
    method_tag: str = ""

    def __post_init__(self):
        self.edges = [(int(s), int(t), float(x)) for s, t, x in self.edges]
        pairs = [(s, t) for s, t, _ in self.edges]
        if len(set(pairs)) != len(pairs):
            raise DataError("ranking contains duplicate pairs")
        if any(s == t for s, t in pairs):
            raise DataError("ranking contains self edges")
        scores = [x for _, _, x in self.edges]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise DataError("scores must be nonincreasing")

    def __len__(self):
        return len(self.edges)

    def pairs(self) -> list[tuple[int, int]]:
        return [(s, t) for s, t, _ in self.edges]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["src", "tgt", "score"])
            for s, t, x in self.edges:
                w.writerow([s, t, repr(x)])

    @classmethod
    def read_csv(cls, path, method_tag: str = "") -> "RankedEdgeList":
        edges = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["src", "tgt", "score"]:
                raise FormatError(f"bad ranking header {header}", path, 1)
            for lineno, row in enumerate(reader, start=2):
                try:
                    edges.append((int(row[0]), int(row[1]), float(row[2])))
                except (ValueError, IndexError) as exc:
                    raise FormatError(f"bad ranking row {row}", path, lineno) from exc
        return cls(edges, method_tag)


@dataclass
class EvalCurves:
    roc: list[tuple[float, float]]
    ppc: list[tuple[float, float]]
    auc: float
    rows: list[dict] = field(default_factory=list)


def _truth_hits(ranked: RankedEdgeList, truth: DirectedGraph) -> np.ndarray:
    n = truth.n_nodes
    for s, t in ranked.pairs():
        if not (0 <= s < n and 0 <= t < n):
            raise DataError(f"pair {(s, t)} outside the {n}-node universe")
    return np.array([(s, t) in truth.edges for s, t in ranked.pairs()], dtype=bool)


def confusion_at_k(ranked: RankedEdgeList, truth: DirectedGraph, k: int):
    """``(TP, FP, FN, TN)`` when the top ``k`` ranked edges are called present."""
    if not 0 <= k <= len(ranked):
        raise DataError(f"k={k} outside [0, {len(ranked)}]")
    hits = _truth_hits(ranked, truth)
    tp = int(hits[:k].sum())
    fp = k - tp
    fn = len(truth) - tp
    tn = truth.universe_size - k - fn
    return tp, fp, fn, tn


def ppc_curve(ranked: RankedEdgeList, truth: DirectedGraph) -> list[tuple[float, float]]:
    """``(k / universe, PPC_k)`` for ``k = 1 .. len(ranked)``."""
    if len(ranked) == 0:
        raise DataError("empty ranking")
    hits = _truth_hits(ranked, truth)
    tp = np.cumsum(hits)
    k = np.arange(1, len(hits) + 1)
    ppc = (2 * tp - k) / k
    u = truth.universe_size
    return [(float(a) / u, float(b)) for a, b in zip(k, ppc)]


def complete_ranking(ranked: RankedEdgeList, n_nodes: int) -> RankedEdgeList:
    """Append every unranked ordered pair, in index order, with score -inf."""
    seen = set(ranked.pairs())
    tail = [(s, t, -np.inf) for s in range(n_nodes) for t in range(n_nodes)
            if s != t and (s, t) not in seen]
    return RankedEdgeList(ranked.edges + tail, ranked.method_tag)


def roc_curve(ranked: RankedEdgeList, truth: DirectedGraph):
    """ROC points for ``k = 0 .. universe`` and the trapezoid AUC.

    The ranking is first completed with the unranked pairs.
    """
    pos = len(truth)
    neg = truth.universe_size - pos
    if pos == 0 or neg == 0:
        raise DegenerateDataError("ROC undefined: truth is empty or complete")
    full = complete_ranking(ranked, truth.n_nodes)
    hits = _truth_hits(full, truth)
    tp = np.concatenate([[0], np.cumsum(hits)])
    fp = np.arange(len(tp)) - tp
    tpr = tp / pos
    fpr = fp / neg
    # trapezoids on integer counts, one division at the end
    auc = float(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])) / (2 * pos * neg))
    return list(zip(fpr.tolist(), tpr.tolist())), auc


def bidirectional_recovery(estimated: DirectedGraph, truth: DirectedGraph):
    """``(recovered, total)`` reciprocal truth pairs, recovered in both directions."""
    if estimated.n_nodes != truth.n_nodes:
        raise DataError("graphs have different node counts")
    recovered = sum(1 for s, t in truth.edges
                    if s < t and (t, s) in truth.edges
                    and (s, t) in estimated.edges and (t, s) in estimated.edges)
    return recovered, count_bidirectional(truth)


def evaluate(ranked: RankedEdgeList, truth: DirectedGraph) -> EvalCurves:
    """Full sweep with one row per prefix length ``k = 0 .. universe``."""
    roc, auc = roc_curve(ranked, truth)
    full = complete_ranking(ranked, truth.n_nodes)
    hits = _truth_hits(full, truth)
    u = truth.universe_size
    rows = []
    tp = 0
    for k in range(u + 1):
        if k > 0:
            tp += int(hits[k - 1])
        fp = k - tp
        rows.append({
            "k": k, "fraction": k / u, "tp": tp, "fp": fp,
            "tpr": roc[k][1], "fpr": roc[k][0],
            "ppc": (tp - fp) / k if k else float("nan"),
        })
    ppc = [(r["fraction"], r["ppc"]) for r in rows[1:len(ranked) + 1]]
    return EvalCurves(roc=roc, ppc=ppc, auc=auc, rows=rows)


def ppc_plateau(curves: EvalCurves) -> int:
    """Number of leading prefixes with PPC equal to 1."""
    n = 0
    for _, v in curves.ppc:
        if v != 1.0:
            break
        n += 1
    return n


def write_curves(curves: EvalCurves, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["k", "fraction", "tp", "fp", "tpr", "fpr", "ppc"]
        w.writerow(cols)
        for r in curves.rows:
            w.writerow([r["k"], repr(float(r["fraction"])), r["tp"], r["fp"],
                        repr(float(r["tpr"])), repr(float(r["fpr"])),
                        "" if r["k"] == 0 else repr(float(r["ppc"]))])


def summary(curves: EvalCurves, ranked: RankedEdgeList, truth: DirectedGraph) -> dict:
    """AUC, PPC plateau and bidirectional recovery of the top-|truth| prefix."""
    k = min(len(truth), len(ranked))
    estimate = DirectedGraph(truth.n_nodes, ranked.pairs()[:k])
    rec, total = bidirectional_recovery(estimate, truth)
    return {
        "method": ranked.method_tag,
        "auc": curves.auc,
        "ppc_plateau": ppc_plateau(curves),
        "n_truth": len(truth),
        "bidirectional_recovered": rec,
        "bidirectional_total": total,
    }


def write_summary(doc: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
