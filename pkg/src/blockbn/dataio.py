"""Data ingestion, discretization, ground-truth network files and forward sampling."""
from __future__ import annotations

import csv
import heapq
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
CODES = "codes"


class DataFormatError(ValueError):
    """Malformed CSV input."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(message if row is None else f"row {row}: {message}")


class NetworkValidationError(ValueError):
    pass


@dataclass
class RawTable:
    names: list[str]
    columns: list[list]
    kinds: list[str]

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0


@dataclass
class DiscreteDataset:
    """Column-oriented table of category codes.

    ``columns[j]`` holds integers in ``[0, arities[j])``.
    """

    names: list[str]
    columns: list[np.ndarray]
    arities: list[int]

    def __post_init__(self):
        self.names = list(self.names)
        self.arities = [int(a) for a in self.arities]
        self.columns = [np.ascontiguousarray(c, dtype=np.int64) for c in self.columns]
        if len(set(self.names)) != len(self.names):
            raise ValueError("variable names must be unique")
        if not (len(self.names) == len(self.columns) == len(self.arities)):
            raise ValueError("names, columns and arities must have equal length")
        n = len(self.columns[0]) if self.columns else 0
        for name, col, r in zip(self.names, self.columns, self.arities):
            if len(col) != n:
                raise ValueError(f"column {name!r} has length {len(col)}, expected {n}")
            if r < 1:
                raise ValueError(f"column {name!r} has arity {r}")
            if n and (col.min() < 0 or col.max() >= r):
                raise ValueError(f"column {name!r} has codes outside [0, {r})")
        self._index = {name: j for j, name in enumerate(self.names)}

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def n_vars(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self._index[name]

    def column(self, name: str) -> np.ndarray:
        return self.columns[self._index[name]]

    def arity(self, name: str) -> int:
        return self.arities[self._index[name]]

    def subset(self, names: Sequence[str]) -> "DiscreteDataset":
        return DiscreteDataset(
            list(names), [self.column(n) for n in names], [self.arity(n) for n in names]
        )

    def with_columns(self, names, columns, arities) -> "DiscreteDataset":
        return DiscreteDataset(
            self.names + list(names), self.columns + list(columns), self.arities + list(arities)
        )

    def matrix(self) -> np.ndarray:
        return np.column_stack(self.columns) if self.columns else np.zeros((0, 0), np.int64)

    def concat(self, other: "DiscreteDataset") -> "DiscreteDataset":
        if other.names != self.names:
            raise ValueError("datasets have different variables")
        return DiscreteDataset(
            self.names,
            [np.concatenate([a, b]) for a, b in zip(self.columns, other.columns)],
            [max(a, b) for a, b in zip(self.arities, other.arities)],
        )

    def __eq__(self, other):
        if not isinstance(other, DiscreteDataset):
            return NotImplemented
        return (
            self.names == other.names
            and self.arities == other.arities
            and all(np.array_equal(a, b) for a, b in zip(self.columns, other.columns))
        )


@dataclass
class BinningSpec:
    edges: dict[str, list[float]] = field(default_factory=dict)
    bins: int = 5
    # variables that collapsed to a single state
    degenerate: list[str] = field(default_factory=list)


# ---------------------------------------------------------------- CSV


def _parses_as_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv(path, schema: dict[str, str] | None = None) -> RawTable:
    """Read a rectangular UTF-8 CSV with a header row.

    Column kinds are inferred (numeric when every cell parses as a number)
    unless ``schema`` overrides them.  Kinds are ``numeric``, ``categorical``
    or ``codes`` (non-negative integers used verbatim as category codes).
    """
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or not rows[0]:
        raise DataFormatError("empty file", row=0)
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataFormatError("duplicate column names in header", row=0)
    body = rows[1:]
    if not body:
        raise DataFormatError("no data rows", row=1)
    width = len(header)
    columns: list[list] = [[] for _ in header]
    for i, row in enumerate(body, start=1):
        if len(row) != width:
            raise DataFormatError(f"expected {width} cells, found {len(row)}", row=i)
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                raise DataFormatError(f"missing value in column {header[j]!r}", row=i)
            columns[j].append(cell)

    schema = schema or {}
    unknown = set(schema) - set(header)
    if unknown:
        raise DataFormatError(f"schema names unknown columns: {sorted(unknown)}")
    kinds = []
    for name, col in zip(header, columns):
        kind = schema.get(name)
        if kind is None:
            kind = NUMERIC if all(_parses_as_number(c) for c in col) else CATEGORICAL
        if kind not in (NUMERIC, CATEGORICAL, CODES):
            raise DataFormatError(f"unknown column kind {kind!r} for {name!r}")
        kinds.append(kind)

    out = []
    for name, col, kind in zip(header, columns, kinds):
        if kind == NUMERIC:
            try:
                out.append([float(c) for c in col])
            except ValueError as exc:
                raise DataFormatError(f"non-numeric cell in numeric column {name!r}: {exc}")
        elif kind == CODES:
            try:
                vals = [int(c) for c in col]
            except ValueError as exc:
                raise DataFormatError(f"non-integer cell in code column {name!r}: {exc}")
            if min(vals) < 0:
                raise DataFormatError(f"negative code in column {name!r}")
            out.append(vals)
        else:
            out.append(col)
    return RawTable(header, out, kinds)


def quantile_edges(values: np.ndarray, bins: int) -> np.ndarray:
    """Interior equal-frequency edges; an edge ``e`` closes the bin ``(.., e]``."""
    qs = np.arange(1, bins) / bins
    edges = np.unique(np.quantile(values, qs, method="lower"))
    # an edge at the maximum would leave the top bin empty
    return edges[edges < values.max()]


def discretize(raw: RawTable, bins: int = 5) -> tuple[DiscreteDataset, BinningSpec]:
    if bins < 2:
        raise ValueError("bins must be >= 2")
    spec = BinningSpec(bins=bins)
    cols, arities = [], []
    for name, col, kind in zip(raw.names, raw.columns, raw.kinds):
        if kind == NUMERIC:
            values = np.asarray(col, dtype=float)
            edges = quantile_edges(values, bins)
            codes = np.searchsorted(edges, values, side="left")
            spec.edges[name] = [float(e) for e in edges]
            arity = len(edges) + 1
        elif kind == CODES:
            codes = np.asarray(col, dtype=np.int64)
            arity = int(codes.max()) + 1
        else:
            mapping: dict = {}
            codes = np.array([mapping.setdefault(v, len(mapping)) for v in col], dtype=np.int64)
            arity = len(mapping)
        if len(np.unique(codes)) == 1:
            spec.degenerate.append(name)
            log.warning("column %r has a single distinct value", name)
        cols.append(codes)
        arities.append(arity)
    return DiscreteDataset(raw.names, cols, arities), spec


def load_dataset(path, bins: int = 5, schema: dict[str, str] | None = None) -> DiscreteDataset:
    data, _ = discretize(read_csv(path, schema), bins)
    return data


def write_dataset_csv(data: DiscreteDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(data.names)
        w.writerows(data.matrix().tolist())


# ---------------------------------------------------------------- networks


@dataclass
class NetworkNode:
    name: str
    states: list[str]
    parents: list[str]
    cpt: np.ndarray  # (prod parent arities, len(states))


@dataclass
class GroundTruthNetwork:
    nodes: list[NetworkNode]

    def __post_init__(self):
        self._by_name = {n.name: n for n in self.nodes}
        if len(self._by_name) != len(self.nodes):
            raise NetworkValidationError("duplicate node names")

    @property
    def names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def node(self, name: str) -> NetworkNode:
        return self._by_name[name]

    def arity(self, name: str) -> int:
        return len(self._by_name[name].states)

    @property
    def edges(self) -> list[tuple[str, str]]:
        return [(p, n.name) for n in self.nodes for p in n.parents]

    def topological_order(self) -> list[str]:
        indeg = {n.name: len(n.parents) for n in self.nodes}
        children: dict[str, list[str]] = {n.name: [] for n in self.nodes}
        for p, c in self.edges:
            children[p].append(c)
        heap = [n for n, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            u = heapq.heappop(heap)
            order.append(u)
            for c in children[u]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        if len(order) != len(self.nodes):
            raise NetworkValidationError("parent structure contains a cycle")
        return order

    def validate(self, tol: float = 1e-9) -> None:
        for n in self.nodes:
            if len(set(n.parents)) != len(n.parents) or n.name in n.parents:
                raise NetworkValidationError(f"node {n.name!r}: bad parent list")
            for p in n.parents:
                if p not in self._by_name:
                    raise NetworkValidationError(f"node {n.name!r}: unknown parent {p!r}")
            if len(n.states) < 1:
                raise NetworkValidationError(f"node {n.name!r} has no states")
            rows = math.prod(self.arity(p) for p in n.parents)
            cpt = np.asarray(n.cpt, dtype=float)
            if cpt.shape != (rows, len(n.states)):
                raise NetworkValidationError(
                    f"node {n.name!r}: CPT shape {cpt.shape}, expected {(rows, len(n.states))}"
                )
            if (cpt < 0).any():
                raise NetworkValidationError(f"node {n.name!r}: negative probability")
            bad = np.abs(cpt.sum(axis=1) - 1.0) > tol
            if bad.any():
                row = int(np.flatnonzero(bad)[0])
                raise NetworkValidationError(
                    f"node {n.name!r}: CPT row {row} sums to {cpt[row].sum():.12g}"
                )
        self.topological_order()

    def __eq__(self, other):
        if not isinstance(other, GroundTruthNetwork):
            return NotImplemented
        if self.names != other.names:
            return False
        for a, b in zip(self.nodes, other.nodes):
            if a.states != b.states or a.parents != b.parents:
                return False
            if not np.array_equal(np.asarray(a.cpt), np.asarray(b.cpt)):
                return False
        return True


def network_to_dict(net: GroundTruthNetwork) -> dict:
    return {
        "nodes": [
            {
                "name": n.name,
                "states": list(n.states),
                "parents": list(n.parents),
                "cpt": np.asarray(n.cpt, dtype=float).tolist(),
            }
            for n in net.nodes
        ]
    }


def network_from_dict(doc: dict, tol: float = 1e-6) -> GroundTruthNetwork:
    try:
        nodes = [
            NetworkNode(
                str(d["name"]),
                [str(s) for s in d["states"]],
                [str(p) for p in d.get("parents", [])],
                np.asarray(d["cpt"], dtype=float),
            )
            for d in doc["nodes"]
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkValidationError(f"malformed network document: {exc}") from exc
    net = GroundTruthNetwork(nodes)
    net.validate(tol)
    return net


def write_network(net: GroundTruthNetwork, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1) + "\n", encoding="utf-8")


def read_network(path) -> GroundTruthNetwork:
    return network_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def parent_config_index(columns: Sequence[np.ndarray], arities: Sequence[int], n: int) -> np.ndarray:
    """Row-major index over parent states, last parent fastest-varying."""
    idx = np.zeros(n, dtype=np.int64)
    for col, r in zip(columns, arities):
        idx = idx * r + col
    return idx


def forward_sample(net: GroundTruthNetwork, n: int, seed: int) -> DiscreteDataset:
    """Ancestral sampling in topological order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    sampled: dict[str, np.ndarray] = {}
    for name in net.topological_order():
        node = net.node(name)
        cfg = parent_config_index(
            [sampled[p] for p in node.parents], [net.arity(p) for p in node.parents], n
        )
        cum = np.cumsum(np.asarray(node.cpt, dtype=float), axis=1)
        u = rng.random(n)
        states = (u[:, None] >= cum[cfg]).sum(axis=1)
        # guard against cumulative sums ending a hair below 1
        sampled[name] = np.minimum(states, len(node.states) - 1)
    return DiscreteDataset(net.names, [sampled[x] for x in net.names], [net.arity(x) for x in net.names])


def random_network(
    n_nodes: int,
    seed: int,
    max_parents: int = 3,
    arity: tuple[int, int] = (2, 4),
    edge_prob: float | None = None,
    concentration: float = 0.5,
    n_modules: int | None = None,
    cross_prob: float = 0.05,
) -> GroundTruthNetwork:
    """Random discrete network for benchmarks.

    Nodes are placed in a random causal order; each earlier node becomes a
    parent with ``edge_prob`` (``cross_prob`` when the two nodes fall in
    different modules), up to ``max_parents``.  CPT rows are Dirichlet draws
    with the given concentration; small values give strong dependencies.
    """
    rng = np.random.default_rng(seed)
    width = len(str(n_nodes - 1))
    names = [f"X{i:0{width}d}" for i in range(n_nodes)]
    order = rng.permutation(n_nodes)
    modules = (
        np.zeros(n_nodes, dtype=int)
        if not n_modules
        else np.sort(rng.integers(0, n_modules, n_nodes))
    )
    if edge_prob is None:
        edge_prob = min(1.0, 2.0 / max(1, n_nodes if not n_modules else n_nodes / n_modules))
    arities = rng.integers(arity[0], arity[1] + 1, n_nodes)
    parents: list[list[str]] = [[] for _ in range(n_nodes)]
    for pos in range(1, n_nodes):
        child = order[pos]
        cands = []
        for prev in order[:pos]:
            p = edge_prob if modules[prev] == modules[child] else cross_prob
            if rng.random() < p:
                cands.append(prev)
        if len(cands) > max_parents:
            cands = list(rng.choice(cands, size=max_parents, replace=False))
        parents[child] = [names[i] for i in sorted(cands)]
    nodes = []
    for i in range(n_nodes):
        rows = math.prod(int(arities[names.index(p)]) for p in parents[i])
        cpt = rng.dirichlet(np.full(int(arities[i]), concentration), size=rows)
        nodes.append(
            NetworkNode(names[i], [f"s{k}" for k in range(arities[i])], parents[i], cpt)
        )
    net = GroundTruthNetwork(nodes)
    net.validate()
    return net
