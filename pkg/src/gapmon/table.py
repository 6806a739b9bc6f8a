"""Approximate precomputed estimation: unfold the belief graph ahead of time
and answer every trace item with a single table lookup.

Nodes carry beliefs, edges carry input labels. A freshly computed
successor reuses the first existing node (in creation order) within
1-norm distance ``epsilon``; otherwise it becomes a new node. Successors
are always computed from the stored node belief, so approximation error
can accumulate along a path.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import exact
from .errors import (
    DigestMismatch,
    ImpossibleObservation,
    InvalidArgument,
    ParseError,
    TableLimitExceeded,
    UnknownLabel,
)
from .model import VERDICTS, Verdict, parse_item

IMPOSSIBLE = -1
DEFAULT_MAX_NODES = 100_000


@dataclass(eq=False)
class PrecomputedTable:
    nodes: np.ndarray          # (count, n, |Q|) beliefs; node 0 is the initial belief
    edges: np.ndarray          # (count, |labels|) successor ids, IMPOSSIBLE where L = 0
    labels: list               # TraceItems in declared order
    epsilon: float
    digest: str
    verdict: tuple             # monitor-state verdict labels, for lookups without the model
    max_nodes: int = DEFAULT_MAX_NODES

    def __post_init__(self):
        self.label_index = {label: i for i, label in enumerate(self.labels)}
        vm = np.zeros((len(self.verdict), len(VERDICTS)))
        for m, v in enumerate(self.verdict):
            vm[m, VERDICTS.index(Verdict(v))] = 1.0
        self.node_verdicts = self.nodes.sum(axis=1) @ vm

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_edges(self):
        return int(self.edges.size)

    def belief(self, node):
        return self.nodes[node]

    def successor(self, node, label):
        try:
            j = self.label_index[label]
        except KeyError:
            raise UnknownLabel(f"label {str(label)!r} was not declared when the table was built") from None
        return int(self.edges[node, j])

    def nbytes(self):
        return int(self.nodes.nbytes + self.edges.nbytes + self.node_verdicts.nbytes)

    def edge_list(self):
        """(source, label, target) triples in node-then-label order."""
        return [
            (u, label, int(self.edges[u, j]))
            for u in range(self.n_nodes)
            for j, label in enumerate(self.labels)
        ]


class _NodeStore:
    """Append-only belief store with first-fit epsilon lookup.

    For epsilon > 0 a grid over a few fixed projections prunes the scan:
    with projection weights in [-1, 1], |w.(a - b)| <= |a - b|_1, so every
    node within epsilon sits in a neighbouring grid cell. The pruned scan
    returns the same node as a full scan in creation order.
    """

    N_PROJ = 2

    def __init__(self, shape, epsilon, max_nodes):
        self.shape = shape
        self.dim = int(np.prod(shape))
        self.epsilon = epsilon
        self.max_nodes = max_nodes
        self.flat = np.empty((min(max_nodes, 1024), self.dim))
        self.count = 0
        self.exact_index = {}
        self.grid = {}
        rng = np.random.default_rng(0x5EED)
        self.proj = rng.uniform(-1.0, 1.0, size=(self.dim, self.N_PROJ))
        self.offsets = np.array(np.meshgrid(*[[-1, 0, 1]] * self.N_PROJ)).reshape(self.N_PROJ, -1).T

    def _cell(self, vec):
        return np.floor(vec @ self.proj / self.epsilon).astype(np.int64)

    def _near(self, vec, cell):
        cand = []
        grid = self.grid
        for key in map(tuple, (cell + self.offsets).tolist()):
            hit = grid.get(key)
            if hit:
                cand.extend(hit)
        if not cand:
            return None
        cand = np.array(sorted(cand))
        dist = np.abs(self.flat[cand] - vec).sum(axis=1)
        close = cand[dist <= self.epsilon]
        return int(close[0]) if close.size else None

    def find_or_add(self, belief):
        vec = belief.reshape(-1) + 0.0  # folds -0.0 into 0.0 for the byte key
        cell = None
        if self.epsilon == 0.0:
            key = vec.tobytes()
            hit = self.exact_index.get(key)
            if hit is not None:
                return hit
        elif np.isinf(self.epsilon):
            if self.count:
                return 0
        else:
            cell = self._cell(vec)
            hit = self._near(vec, cell)
            if hit is not None:
                return hit
        if self.count >= self.max_nodes:
            raise TableLimitExceeded(self.max_nodes)
        if self.count == len(self.flat):
            grown = np.empty((min(2 * len(self.flat), self.max_nodes), self.dim))
            grown[: self.count] = self.flat[: self.count]
            self.flat = grown
        self.flat[self.count] = vec
        if self.epsilon == 0.0:
            self.exact_index[vec.tobytes()] = self.count
        elif cell is not None:
            self.grid.setdefault(tuple(cell.tolist()), []).append(self.count)
        self.count += 1
        return self.count - 1

    def beliefs(self):
        return self.flat[: self.count].reshape((self.count,) + self.shape).copy()


def precompute(bundle, epsilon, max_nodes=DEFAULT_MAX_NODES, labels=None):
    """Breadth-first unfolding of the belief graph from the initial belief.

    ``labels`` defaults to every symbol, gap id and peek value of the
    bundle, in that order.
    """
    if not epsilon >= 0.0:
        raise InvalidArgument("epsilon must be >= 0")
    if max_nodes < 1:
        raise InvalidArgument("max_nodes must be positive")
    labels = list(bundle.labels() if labels is None else labels)
    for label in labels:
        bundle.check_item(label)

    start = exact.init_belief(bundle.hmm, bundle.dfsm)
    store = _NodeStore(start.shape, float(epsilon), max_nodes)
    store.find_or_add(start)
    rows = []
    u = 0
    while u < store.count:
        belief = store.flat[u].reshape(store.shape)
        row = []
        for label in labels:
            try:
                nxt, _ = exact.step(belief, bundle, label)
            except ImpossibleObservation:
                row.append(IMPOSSIBLE)
                continue
            row.append(store.find_or_add(nxt))
        rows.append(row)
        u += 1

    return PrecomputedTable(
        nodes=store.beliefs(),
        edges=np.array(rows, dtype=np.int64).reshape(store.count, len(labels)),
        labels=labels,
        epsilon=float(epsilon),
        digest=bundle.digest(),
        verdict=tuple(v.value for v in bundle.dfsm.verdict),
        max_nodes=max_nodes,
    )


def audit(table, bundle):
    """Largest 1-norm gap between an edge's exact successor and its target
    node. Impossible edges are checked to really be impossible."""
    worst = 0.0
    for u in range(table.n_nodes):
        for j, label in enumerate(table.labels):
            v = int(table.edges[u, j])
            try:
                nxt, _ = exact.step(table.nodes[u], bundle, label)
            except ImpossibleObservation:
                if v != IMPOSSIBLE:
                    raise AssertionError(f"edge {u}-{label}: impossible step has target {v}")
                continue
            if v == IMPOSSIBLE:
                raise AssertionError(f"edge {u}-{label}: possible step marked impossible")
            worst = max(worst, float(np.abs(nxt - table.nodes[v]).sum()))
    return worst


@dataclass
class TableRecord:
    index: int
    item: object
    node: int
    verdicts: dict

    def to_json(self):
        return {
            "index": self.index,
            "item": None if self.item is None else str(self.item),
            "verdicts": {str(k): v for k, v in self.verdicts.items()},
            "node": self.node,
        }


def _verdict_dict(row):
    return {label: float(p) for label, p in zip(VERDICTS, row)}


def run_table(table, trace):
    """Follow the trace through the table. No belief arithmetic happens
    here; each item costs one lookup."""
    index = table.label_index
    cols = []
    for item in trace:
        j = index.get(item)
        if j is None:
            raise UnknownLabel(f"label {str(item)!r} was not declared when the table was built")
        cols.append(j)
    edges, verdicts = table.edges, table.node_verdicts
    node = 0
    records = [TableRecord(-1, None, 0, _verdict_dict(verdicts[0]))]
    for i, (item, j) in enumerate(zip(trace, cols)):
        node = int(edges[node, j])
        if node == IMPOSSIBLE:
            raise ImpossibleObservation(f"item {i} ({item}) has probability 0 under the model")
        records.append(TableRecord(i, item, node, _verdict_dict(verdicts[node])))
    return records


def lookup_path(table, cols):
    """Bare node walk over pre-resolved label columns (benchmark kernel)."""
    edges = table.edges
    nv = table.node_verdicts
    node = 0
    for j in cols:
        node = edges[node, j]
        nv[node]
    return int(node)


def table_to_dict(table):
    return {
        "meta": {
            "format": "gapmon-table/1",
            "epsilon": table.epsilon,
            "model_digest": table.digest,
            "max_nodes": table.max_nodes,
            "node_count": table.n_nodes,
            "edge_count": table.n_edges,
            "verdict": list(table.verdict),
        },
        "labels": [str(label) for label in table.labels],
        "nodes": [b.tolist() for b in table.nodes],
        "edges": [[u, str(label), v] for u, label, v in table.edge_list()],
    }


def save_table(table, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table_to_dict(table), fh, separators=(",", ":"))
        fh.write("\n")


def load_table(path, bundle=None):
    """Load a table file; with ``bundle`` given, verify the model digest."""
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read table: {exc.strerror}", source=path) from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, exc.colno, path) from None
    try:
        meta = d["meta"]
        labels = [parse_item(s) for s in d["labels"]]
        nodes = np.array(d["nodes"], dtype=np.float64)
        col = {label: j for j, label in enumerate(labels)}
        edges = np.full((len(nodes), len(labels)), -2, dtype=np.int64)
        for u, label, v in d["edges"]:
            edges[u, col[parse_item(label)]] = v
        table = PrecomputedTable(
            nodes=nodes,
            edges=edges,
            labels=labels,
            epsilon=float(meta["epsilon"]),
            digest=str(meta["model_digest"]),
            verdict=tuple(meta["verdict"]),
            max_nodes=int(meta.get("max_nodes", DEFAULT_MAX_NODES)),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ParseError(f"malformed table file: {exc!s}", source=path) from None
    if nodes.ndim != 3 or (edges == -2).any() or (edges >= len(nodes)).any():
        raise ParseError("malformed table file: incomplete node or edge set", source=path)
    if bundle is not None and bundle.digest() != table.digest:
        raise DigestMismatch(f"{path} was built from a different model (digest {table.digest[:12]}...)")
    return table
