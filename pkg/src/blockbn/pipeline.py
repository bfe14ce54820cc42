"""Block structure learning: cluster, learn locally, compress, learn globally, connect.

Also parameter fitting and single-variable gap recovery on the resulting
networks.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import compress as cmp
from .dataio import DiscreteDataset, GroundTruthNetwork
from .graph import Dag
from .infotheory import divergence_matrix
from .search import ScoreValue, SearchConfig, hill_climb
from .varcluster import VariableClustering, agglomerate, recommend_threshold, threshold_grid

AUTO = "auto"
STRUCTURE_STAGES = ("divergence", "clustering", "local", "compression", "global", "connect")
_OBJECT_KEYS = 1 << 62


# ---------------------------------------------------------------- CPTs


def config_keys(columns: Sequence[np.ndarray], arities: Sequence[int], n: int) -> np.ndarray:
    """Row-major parent configuration keys, last parent fastest.

    Falls back to Python integers when the configuration space would
    overflow int64.
    """
    if math.prod(arities) < _OBJECT_KEYS:
        keys = np.zeros(n, dtype=np.int64)
        for col, r in zip(columns, arities):
            keys = keys * r + col
        return keys
    keys = np.zeros(n, dtype=object)
    for col, r in zip(columns, arities):
        keys = keys * r + col.astype(object)
    return keys


@dataclass
class Cpt:
    """Conditional table stored for observed parent configurations only.

    Configurations missing from ``keys`` use the uniform row.
    """

    node: str
    parents: list[str]
    arity: int
    parent_arities: list[int]
    keys: np.ndarray
    table: np.ndarray

    def rows(self, parent_cols: Sequence[np.ndarray], n: int) -> np.ndarray:
        """Probability rows (n, arity) for the given parent columns."""
        keys = config_keys(parent_cols, self.parent_arities, n)
        out = np.full((n, self.arity), 1.0 / self.arity)
        if len(self.keys):
            pos = np.searchsorted(self.keys, keys)
            pos = np.minimum(pos, len(self.keys) - 1)
            found = self.keys[pos] == keys
            found = np.asarray(found, dtype=bool)
            out[found] = self.table[pos[found]]
        return out

    def prob(self, value: np.ndarray, parent_cols: Sequence[np.ndarray]) -> np.ndarray:
        n = len(value)
        return self.rows(parent_cols, n)[np.arange(n), value]

    def to_dict(self) -> dict:
        return {
            "parents": list(self.parents),
            "arity": self.arity,
            "parent_arities": list(self.parent_arities),
            "rows": [[int(k), row.tolist()] for k, row in zip(self.keys, self.table)],
        }

    @classmethod
    def from_dict(cls, node: str, doc: dict) -> "Cpt":
        pa = [int(a) for a in doc["parent_arities"]]
        big = math.prod(pa) >= _OBJECT_KEYS
        keys = np.array([int(k) for k, _ in doc["rows"]], dtype=object if big else np.int64)
        table = np.array([r for _, r in doc["rows"]], dtype=float).reshape(len(keys), int(doc["arity"]))
        return cls(node, list(doc["parents"]), int(doc["arity"]), pa, keys, table)


def fit_cpt(data: DiscreteDataset, node: str, parents: Sequence[str], smoothing: float = 1.0) -> Cpt:
    parents = sorted(parents)
    x = data.column(node)
    r = data.arity(node)
    pa_ar = [data.arity(p) for p in parents]
    keys = config_keys([data.column(p) for p in parents], pa_ar, data.n_rows)
    uniq, inv = np.unique(keys, return_inverse=True)
    inv = inv.reshape(-1).astype(np.int64)
    counts = np.bincount(inv * r + x, minlength=len(uniq) * r).reshape(len(uniq), r).astype(float)
    counts += smoothing
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        table = np.where(totals > 0, counts / totals, 1.0 / r)
    if uniq.dtype != object:
        uniq = uniq.astype(np.int64)
    return Cpt(node, list(parents), r, pa_ar, uniq, table)


def fit_cpts(dag: Dag, data: DiscreteDataset, smoothing: float = 1.0) -> dict[str, Cpt]:
    """Additively smoothed maximum-likelihood tables for every node of ``dag``."""
    if smoothing < 0:
        raise ValueError("smoothing must be >= 0")
    return {v: fit_cpt(data, v, dag.parents(v), smoothing) for v in sorted(dag.nodes)}


@dataclass
class FittedNetwork:
    dag: Dag
    cpts: dict[str, Cpt]

    @property
    def arities(self) -> dict[str, int]:
        return {v: c.arity for v, c in self.cpts.items()}

    @classmethod
    def from_ground_truth(cls, net: GroundTruthNetwork) -> "FittedNetwork":
        cpts = {}
        for node in net.nodes:
            # ground-truth tables are row-major in declared parent order
            cpt = np.asarray(node.cpt, dtype=float)
            cpts[node.name] = Cpt(
                node.name,
                list(node.parents),
                len(node.states),
                [net.arity(p) for p in node.parents],
                np.arange(cpt.shape[0], dtype=np.int64),
                cpt,
            )
        return cls(Dag(net.names, net.edges), cpts)

    def log_factor(self, node: str, cols: Mapping[str, np.ndarray]) -> np.ndarray:
        cpt = self.cpts[node]
        with np.errstate(divide="ignore"):
            return np.log(cpt.prob(cols[node], [cols[p] for p in cpt.parents]))

    def impute(self, cols: Mapping[str, np.ndarray], target: str, tied: Sequence[str] = ()) -> np.ndarray:
        """Joint argmax over the target state and one shared value of the ``tied`` nodes.

        Only factors touching a hidden node enter the product.  Ties keep
        the smallest target state, then the smallest tied value.
        """
        if target not in self.cpts:
            raise KeyError(f"unknown target {target!r}")
        hidden = [target, *tied]
        factors = sorted({h for h in hidden} | {c for h in hidden for c in self.dag.children(h)})
        n = len(next(iter(cols.values())))
        r = self.cpts[target].arity
        k = self.cpts[tied[0]].arity if tied else 1
        best = np.full(n, -np.inf)
        pred = np.zeros(n, dtype=np.int64)
        work = dict(cols)
        for t in range(r):
            work[target] = np.full(n, t, dtype=np.int64)
            for c in range(k):
                for h in tied:
                    work[h] = np.full(n, c, dtype=np.int64)
                s = np.zeros(n)
                for f in factors:
                    s = s + self.log_factor(f, work)
                better = s > best
                if t == 0 and c == 0:
                    better = np.ones(n, dtype=bool)
                best = np.where(better, s, best)
                pred = np.where(better, t, pred)
        return pred


def impute_one(network: FittedNetwork, row: Mapping[str, int], target: str, tied: Sequence[str] = ()) -> int:
    """Recover one hidden value of ``row`` (values of ``target`` and ``tied`` are ignored)."""
    cols = {k: np.array([int(v)], dtype=np.int64) for k, v in row.items()}
    for h in (target, *tied):
        cols.setdefault(h, np.zeros(1, dtype=np.int64))
    return int(network.impute(cols, target, tied)[0])


# ---------------------------------------------------------------- block model


@dataclass(frozen=True)
class BlockConfig:
    threshold: float | str = AUTO
    grid_step: float = 0.1
    compression: str = cmp.HAMMING
    alpha: float = 0.05
    min_count: int = 5
    hamming_threshold: float = 0.95
    search: SearchConfig = SearchConfig()
    smoothing: float = 1.0
    workers: int = 1
    seed: int = 0
    fit: bool = True


@dataclass(frozen=True)
class SupportNames:
    code: str
    top: str
    bot: str


def support_names(clustering: VariableClustering) -> dict[int, SupportNames]:
    taken = set(clustering.names)
    out = {}
    for k, members in enumerate(clustering.clusters):
        if len(members) < 2:
            continue
        prefix = f"C{k}"
        while {prefix, f"{prefix}.top", f"{prefix}.bot"} & taken:
            prefix = "_" + prefix
        out[k] = SupportNames(prefix, f"{prefix}.top", f"{prefix}.bot")
        taken |= {prefix, f"{prefix}.top", f"{prefix}.bot"}
    return out


def global_names(clustering: VariableClustering) -> list[str]:
    """Global-search variable per cluster: its code, or the variable itself for singletons."""
    sup = support_names(clustering)
    return [
        sup[k].code if k in sup else clustering.names[members[0]]
        for k, members in enumerate(clustering.clusters)
    ]


def connect(
    clustering: VariableClustering,
    local_dags: Sequence[Dag],
    codebooks: Mapping[int, cmp.Codebook],
    global_dag: Dag,
) -> Dag:
    """Join local networks through two support nodes per coded cluster.

    The top node points at every member, every member points at the bottom
    node, and a global edge A -> B becomes bottom(A) -> top(B), with
    singletons standing in for both of their own support nodes.
    """
    sup = support_names(clustering)
    gnames = global_names(clustering)
    if set(gnames) != set(global_dag.nodes):
        raise ValueError("global DAG does not match the clustering")
    if set(codebooks) != set(sup):
        raise ValueError("a codebook is required for every cluster with two or more members")
    owner = {g: k for k, g in enumerate(gnames)}
    nodes = list(clustering.names)
    edges = set()
    for k, dag in enumerate(local_dags):
        members = clustering.member_names(k)
        if set(dag.nodes) != set(members):
            raise ValueError(f"local DAG {k} does not cover its cluster")
        edges |= dag.edges
        if k in sup:
            s = sup[k]
            nodes += [s.top, s.bot]
            edges |= {(s.top, m) for m in members}
            edges |= {(m, s.bot) for m in members}
    for u, v in global_dag.edges:
        ku, kv = owner[u], owner[v]
        src = sup[ku].bot if ku in sup else u
        dst = sup[kv].top if kv in sup else v
        edges.add((src, dst))
    return Dag(nodes, edges)


@dataclass
class BlockInfeasible:
    """Most-frequent compression failed for at least one cluster."""

    clusters: list[int]
    reports: list[cmp.Infeasible]
    threshold: float
    timings: dict[str, float] = field(default_factory=dict)
    status: str = "compression_infeasible"

    def describe(self) -> str:
        return "; ".join(r.describe() for r in self.reports)


@dataclass
class BlockModel:
    names: list[str]
    arities: list[int]
    clustering: VariableClustering
    local_dags: list[Dag]
    codebooks: dict[int, cmp.Codebook]
    global_dag: Dag
    combined: Dag
    cpts: dict[str, Cpt]
    provenance: dict
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def supports(self) -> dict[int, SupportNames]:
        return support_names(self.clustering)

    @property
    def structure_ms(self) -> float:
        return sum(self.timings.get(s, 0.0) for s in STRUCTURE_STAGES)

    def original_dag(self) -> Dag:
        """Combined network without support nodes and their edges."""
        return self.combined.subgraph(self.names)

    def network(self) -> FittedNetwork:
        return FittedNetwork(self.combined, self.cpts)

    def augment(self, data: DiscreteDataset) -> DiscreteDataset:
        """Append the code column of each coded cluster under both support names."""
        names, cols, ars = [], [], []
        for k, s in self.supports.items():
            book = self.codebooks[k]
            code = cmp.encode_column(data, book.members, book)
            names += [s.top, s.bot]
            cols += [code, code]
            ars += [book.n_codes, book.n_codes]
        return data.subset(self.names).with_columns(names, cols, ars)

    def cluster_of(self, name: str) -> int:
        return int(self.clustering.labels()[self.names.index(name)])

    def impute(self, row: Mapping[str, int], target: str) -> int:
        """Connected-mode recovery: the target and its cluster's code are hidden."""
        if target not in self.names:
            raise KeyError(f"unknown target {target!r}")
        cols = {k: np.array([int(v)], dtype=np.int64) for k, v in row.items()}
        cols[target] = np.zeros(1, dtype=np.int64)
        aug = self.augment(DiscreteDataset(self.names, [cols[n] for n in self.names], self.arities))
        k = self.cluster_of(target)
        tied = [self.supports[k].top, self.supports[k].bot] if k in self.supports else []
        full = dict(zip(aug.names, aug.columns))
        return int(self.network().impute(full, target, tied)[0])

    def to_document(self, include_timings: bool = False) -> dict:
        doc = {
            "format": "blockbn-model/1",
            "mode": "block",
            "variables": [{"name": n, "arity": r} for n, r in zip(self.names, self.arities)],
            "clustering": {
                "threshold": self.clustering.threshold,
                "clusters": [self.clustering.member_names(k) for k in range(self.clustering.n_clusters)],
            },
            "support_nodes": {
                str(k): {"code": s.code, "top": s.top, "bottom": s.bot} for k, s in self.supports.items()
            },
            "codebooks": {str(k): b.to_dict() for k, b in sorted(self.codebooks.items())},
            "local_dags": [[list(e) for e in d.sorted_edges()] for d in self.local_dags],
            "global_dag": {
                "nodes": list(self.global_dag.nodes),
                "edges": [list(e) for e in self.global_dag.sorted_edges()],
            },
            "combined": {
                "nodes": list(self.combined.nodes),
                "edges": [list(e) for e in self.combined.sorted_edges()],
            },
            "cpts": {v: c.to_dict() for v, c in sorted(self.cpts.items())},
            "provenance": dict(self.provenance),
        }
        if include_timings:
            doc["provenance"]["timings_ms"] = {k: round(v, 3) for k, v in self.timings.items()}
        return doc

    @classmethod
    def from_document(cls, doc: dict) -> "BlockModel":
        names = [v["name"] for v in doc["variables"]]
        arities = [int(v["arity"]) for v in doc["variables"]]
        index = {n: i for i, n in enumerate(names)}
        clusters = sorted(
            (tuple(sorted(index[m] for m in c)) for c in doc["clustering"]["clusters"]),
            key=lambda c: c[0],
        )
        clustering = VariableClustering(float(doc["clustering"]["threshold"]), tuple(clusters), tuple(names))
        local = [
            Dag(clustering.member_names(k), [tuple(e) for e in edges])
            for k, edges in enumerate(doc["local_dags"])
        ]
        books = {int(k): cmp.Codebook.from_dict(b) for k, b in doc["codebooks"].items()}
        g = doc["global_dag"]
        c = doc["combined"]
        cpts = {v: Cpt.from_dict(v, d) for v, d in doc["cpts"].items()}
        prov = dict(doc.get("provenance", {}))
        timings = prov.pop("timings_ms", {})
        return cls(
            names,
            arities,
            clustering,
            local,
            books,
            Dag(g["nodes"], [tuple(e) for e in g["edges"]]),
            Dag(c["nodes"], [tuple(e) for e in c["edges"]]),
            cpts,
            prov,
            timings,
        )


def _ms(t0: float) -> float:
    return (time.perf_counter() - t0) * 1000.0


def learn_classic(
    data: DiscreteDataset, config: SearchConfig = SearchConfig(), trace: bool = False
) -> tuple[Dag, ScoreValue, float]:
    """Plain Hill-Climbing over all variables; returns elapsed seconds."""
    t0 = time.perf_counter()
    dag, value, _ = hill_climb(data, data.names, config, trace=trace)
    return dag, value, time.perf_counter() - t0


def learn_block(data: DiscreteDataset, config: BlockConfig = BlockConfig()) -> BlockModel | BlockInfeasible:
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    div = divergence_matrix(data)
    timings["divergence"] = _ms(t0)

    t0 = time.perf_counter()
    if config.threshold == AUTO:
        threshold, clustering = recommend_threshold(div, threshold_grid(config.grid_step))
    else:
        threshold = float(config.threshold)
        clustering = agglomerate(div, threshold)
    timings["clustering"] = _ms(t0)

    t0 = time.perf_counter()
    members = [clustering.member_names(k) for k in range(clustering.n_clusters)]

    def local(ms: list[str]) -> Dag:
        return hill_climb(data, ms, config.search)[0]

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as ex:
            local_dags = list(ex.map(local, members))
    else:
        local_dags = [local(ms) for ms in members]
    timings["local"] = _ms(t0)

    t0 = time.perf_counter()
    sup = support_names(clustering)
    books: dict[int, cmp.Codebook] = {}
    failures: list[tuple[int, cmp.Infeasible]] = []
    code_cols: dict[int, np.ndarray] = {}
    for k in sup:
        book = cmp.build_codebook(
            data, members[k], config.compression, config.alpha, config.min_count, config.hamming_threshold
        )
        if isinstance(book, cmp.Infeasible):
            failures.append((k, book))
            continue
        books[k] = book
        code_cols[k] = cmp.encode_column(data, members[k], book)
    timings["compression"] = _ms(t0)
    if failures:
        return BlockInfeasible([k for k, _ in failures], [r for _, r in failures], threshold, timings)

    t0 = time.perf_counter()
    gnames = global_names(clustering)
    gcols, gars = [], []
    for k, ms in enumerate(members):
        if k in sup:
            gcols.append(code_cols[k])
            gars.append(books[k].n_codes)
        else:
            gcols.append(data.column(ms[0]))
            gars.append(data.arity(ms[0]))
    global_data = DiscreteDataset(gnames, gcols, gars)
    global_dag = hill_climb(global_data, gnames, config.search)[0]
    timings["global"] = _ms(t0)

    t0 = time.perf_counter()
    combined = connect(clustering, local_dags, books, global_dag)
    timings["connect"] = _ms(t0)

    model = BlockModel(
        list(data.names),
        list(data.arities),
        clustering,
        local_dags,
        books,
        global_dag,
        combined,
        {},
        {
            "score": config.search.score,
            "max_parents": config.search.max_parents,
            "threshold": threshold,
            "threshold_mode": AUTO if config.threshold == AUTO else "fixed",
            "compression": config.compression,
            "alpha": config.alpha,
            "min_count": config.min_count,
            "hamming_threshold": config.hamming_threshold,
            "smoothing": config.smoothing,
            "seed": config.seed,
            "shd_convention": "dag-level, support nodes removed",
        },
        timings,
    )
    if config.fit:
        t0 = time.perf_counter()
        model.cpts = fit_cpts(combined, model.augment(data), config.smoothing)
        timings["fit"] = _ms(t0)
    return model


def separated_network(model: BlockModel, data: DiscreteDataset, smoothing: float = 1.0) -> FittedNetwork:
    """Union of the local DAGs with no links between clusters, fitted on ``data``."""
    edges = set().union(*(d.edges for d in model.local_dags)) if model.local_dags else set()
    dag = Dag(model.names, edges)
    return FittedNetwork(dag, fit_cpts(dag, data.subset(model.names), smoothing))


# ---------------------------------------------------------------- gap recovery


@dataclass
class ImputationReport:
    variables: list[str]
    accuracy_connected: dict[str, float]
    accuracy_separated: dict[str, float]
    overall_connected: float
    overall_separated: float
    ratio: float | None  # None when separated accuracy is zero

    def to_dict(self) -> dict:
        return {
            "variables": self.variables,
            "accuracy_connected": self.accuracy_connected,
            "accuracy_separated": self.accuracy_separated,
            "overall_connected": self.overall_connected,
            "overall_separated": self.overall_separated,
            "ratio": self.ratio,
        }


def accuracy_ratio(connected: float, separated: float) -> float | None:
    return None if separated == 0 else connected / separated - 1.0


def evaluate_imputation(
    model: BlockModel, separated: FittedNetwork, data: DiscreteDataset, workers: int = 1
) -> ImputationReport:
    """Hide each variable in every row, recover it with both networks, and score."""
    aug = model.augment(data)
    cols = dict(zip(aug.names, aug.columns))
    net = model.network()
    sup = model.supports
    labels = model.clustering.labels()

    def one(j: int) -> tuple[float, float]:
        name = model.names[j]
        truth = cols[name]
        k = int(labels[j])
        tied = [sup[k].top, sup[k].bot] if k in sup else []
        acc_c = float(np.mean(net.impute(cols, name, tied) == truth))
        acc_s = float(np.mean(separated.impute(cols, name) == truth))
        return acc_c, acc_s

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(one, range(len(model.names))))
    else:
        results = [one(j) for j in range(len(model.names))]
    acc_c = {n: r[0] for n, r in zip(model.names, results)}
    acc_s = {n: r[1] for n, r in zip(model.names, results)}
    overall_c = float(np.mean(list(acc_c.values())))
    overall_s = float(np.mean(list(acc_s.values())))
    return ImputationReport(list(model.names), acc_c, acc_s, overall_c, overall_s, accuracy_ratio(overall_c, overall_s))


# ---------------------------------------------------------------- documents


def classic_document(data: DiscreteDataset, dag: Dag, score: ScoreValue, cpts: dict[str, Cpt], provenance: dict) -> dict:
    return {
        "format": "blockbn-model/1",
        "mode": "classic",
        "variables": [{"name": n, "arity": r} for n, r in zip(data.names, data.arities)],
        "combined": {"nodes": list(dag.nodes), "edges": [list(e) for e in dag.sorted_edges()]},
        "score": {"total": score.total, "local": score.local},
        "cpts": {v: c.to_dict() for v, c in sorted(cpts.items())},
        "provenance": dict(provenance),
    }


def write_document(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


def read_document(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def document_dag(doc: dict) -> Dag:
    """Learned structure over the original variables (support nodes removed)."""
    names = [v["name"] for v in doc["variables"]]
    c = doc["combined"]
    return Dag(c["nodes"], [tuple(e) for e in c["edges"]]).subgraph(names)
