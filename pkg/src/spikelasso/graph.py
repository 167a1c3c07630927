"""Directed ground-truth networks.

Nodes are 0-based. An edge ``(src, tgt)`` means ``src`` projects onto
``tgt``; in the adjacency matrix the row is the source and the column the
target. Self-connections are never allowed.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, FormatError, ParameterError

Edge = tuple[int, int]


@dataclass(frozen=True)
class DirectedGraph:
    """Immutable directed graph without self-loops.

    Parameters
    ----------
    n_nodes : int
        Number of neurons.
    edges : iterable of (int, int)
        Ordered ``(source, target)`` pairs. Duplicates are rejected.
    edge_weights : mapping, optional
        Per-edge synaptic strength multiplier. Edges missing from the map
        have weight 1.0.
    """

    n_nodes: int
    edges: frozenset = field(default_factory=frozenset)
    edge_weights: Mapping[Edge, float] = field(default_factory=dict)

    def __init__(self, n_nodes: int, edges: Iterable[Edge] = (),
                 edge_weights: Mapping[Edge, float] | None = None):
        n_nodes = int(n_nodes)
        if n_nodes < 1:
            raise ParameterError(f"n_nodes must be positive, got {n_nodes}")
        edge_list = [(int(s), int(t)) for s, t in edges]
        edge_set = frozenset(edge_list)
        if len(edge_set) != len(edge_list):
            raise DataError("duplicate edges")
        for s, t in edge_set:
            if not (0 <= s < n_nodes and 0 <= t < n_nodes):
                raise DataError(f"edge {(s, t)} outside [0, {n_nodes})")
            if s == t:
                raise DataError(f"self-connection {(s, t)} not allowed")
        weights = {}
        for e, w in (edge_weights or {}).items():
            e = (int(e[0]), int(e[1]))
            if e not in edge_set:
                raise DataError(f"weight given for missing edge {e}")
            weights[e] = float(w)
        object.__setattr__(self, "n_nodes", n_nodes)
        object.__setattr__(self, "edges", edge_set)
        object.__setattr__(self, "edge_weights", weights)

    def __len__(self):
        return len(self.edges)

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def weight(self, edge: Edge) -> float:
        return self.edge_weights.get(edge, 1.0)

    def weight_matrix(self) -> np.ndarray:
        """Adjacency with each entry scaled by its edge weight."""
        w = np.zeros((self.n_nodes, self.n_nodes))
        for s, t in self.edges:
            w[s, t] = self.weight((s, t))
        return w

    @property
    def universe_size(self) -> int:
        """Number of ordered non-self pairs."""
        return self.n_nodes * (self.n_nodes - 1)

    def to_json(self, path=None) -> str:
        doc = {"n_nodes": self.n_nodes,
               "edges": [list(e) for e in self.sorted_edges()]}
        if any(w != 1.0 for w in self.edge_weights.values()):
            doc["edge_weights"] = [[s, t, self.edge_weights[(s, t)]]
                                   for s, t in sorted(self.edge_weights)]
        text = json.dumps(doc)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def generate_random(n_nodes: int, p_connect: float, seed: int) -> DirectedGraph:
    """Erdos-Renyi style directed graph without autapses.

    Each of the ``n_nodes * (n_nodes - 1)`` ordered pairs is included
    independently with probability ``p_connect``.
    """
    if not 0.0 <= p_connect <= 1.0:
        raise ParameterError(f"p_connect must lie in [0, 1], got {p_connect}")
    if n_nodes < 2:
        raise ParameterError(f"n_nodes must be >= 2, got {n_nodes}")
    rng = np.random.default_rng(seed)
    mask = rng.random((n_nodes, n_nodes)) < p_connect
    np.fill_diagonal(mask, False)
    src, tgt = np.nonzero(mask)
    return DirectedGraph(n_nodes, zip(src.tolist(), tgt.tolist()))


def to_adjacency(g: DirectedGraph) -> np.ndarray:
    """0/1 integer matrix, ``A[src, tgt] = 1`` for every edge."""
    a = np.zeros((g.n_nodes, g.n_nodes), dtype=int)
    for s, t in g.edges:
        a[s, t] = 1
    return a


def from_adjacency(a) -> DirectedGraph:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DataError(f"adjacency must be square, got shape {a.shape}")
    if not np.isin(a, (0, 1)).all():
        raise DataError("adjacency entries must be 0 or 1")
    if np.any(np.diag(a)):
        raise DataError("adjacency has nonzero diagonal")
    src, tgt = np.nonzero(a)
    return DirectedGraph(a.shape[0], zip(src.tolist(), tgt.tolist()))


def count_bidirectional(g: DirectedGraph) -> int:
    """Number of unordered pairs connected in both directions."""
    return sum(1 for s, t in g.edges if s < t and (t, s) in g.edges)


def graph_from_json(text: str, path=None) -> DirectedGraph:
    try:
        doc = json.loads(text)
        n = doc["n_nodes"]
        edges = [tuple(e) for e in doc["edges"]]
        weights = {(s, t): w for s, t, w in doc.get("edge_weights", [])}
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad graph JSON ({exc})", path=path) from exc
    return DirectedGraph(n, edges, weights)


def read_json(path) -> DirectedGraph:
    return graph_from_json(Path(path).read_text(), path=path)


def write_csv(g: DirectedGraph, path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(to_adjacency(g).tolist())


def read_csv(path) -> DirectedGraph:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            try:
                rows.append([int(v) for v in row])
            except ValueError as exc:
                raise FormatError(f"non-integer entry ({exc})", path, lineno) from exc
    if any(len(r) != len(rows) for r in rows):
        raise FormatError("adjacency CSV is not square", path)
    return from_adjacency(np.array(rows, dtype=int).reshape(len(rows), len(rows)))
