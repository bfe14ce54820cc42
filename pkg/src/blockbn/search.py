"""Decomposable BIC / MI scores and greedy Hill-Climbing over DAGs."""
from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataio import DiscreteDataset
from .graph import ADD, DELETE, REVERSE, Dag

BIC, MI = "bic", "mi"
SCORES = (BIC, MI)

# keep mixed-radix keys well inside int64
_KEY_LIMIT = 1 << 40


@dataclass(frozen=True)
class SearchConfig:
    score: str = BIC
    max_parents: int = 4
    epsilon: float = 1e-9
    max_iterations: int = 100_000

    def __post_init__(self):
        if self.score not in SCORES:
            raise ValueError(f"unknown score {self.score!r}")
        if self.max_parents < 1:
            raise ValueError("max_parents must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class ScoreValue:
    total: float
    local: dict[str, float]


@dataclass
class SearchStats:
    iterations: int = 0
    moves_evaluated: int = 0
    elapsed: float = 0.0
    trace: list[tuple[int, str, str, str, float]] = field(default_factory=list)


def joint_codes(columns: Sequence[np.ndarray], arities: Sequence[int], n: int) -> tuple[np.ndarray, int]:
    """Mixed-radix joint code over columns, re-densified whenever it grows large.

    Returns ``(codes, bound)`` with every code in ``[0, bound)``.
    """
    codes = np.zeros(n, dtype=np.int64)
    bound = 1
    for col, r in zip(columns, arities):
        if bound * r > _KEY_LIMIT:
            _, codes = np.unique(codes, return_inverse=True)
            codes = codes.reshape(-1).astype(np.int64)
            bound = int(codes.max()) + 1 if n else 1
        codes = codes * r + col
        bound *= r
    return codes, bound


def _xlogx_sum(counts: np.ndarray) -> float:
    c = counts[counts > 0].astype(float)
    return float(np.sum(c * np.log(c)))


def _counts(codes: np.ndarray, bound: int, n: int) -> np.ndarray:
    if bound <= max(4 * n, 1 << 16):
        return np.bincount(codes, minlength=bound)
    return np.unique(codes, return_counts=True)[1]


def log_likelihood(data: DiscreteDataset, child: str, parents: Sequence[str]) -> float:
    """Maximized multinomial log-likelihood of ``child`` given its parent configurations."""
    n = data.n_rows
    x = data.column(child)
    r = data.arity(child)
    if not parents:
        return _xlogx_sum(np.bincount(x, minlength=r)) - (n * math.log(n) if n else 0.0)
    cfg, bound = joint_codes([data.column(p) for p in parents], [data.arity(p) for p in parents], n)
    joint = _counts(cfg * r + x, bound * r, n)
    marg = _counts(cfg, bound, n)
    return _xlogx_sum(joint) - _xlogx_sum(marg)


def bic_local(data: DiscreteDataset, child: str, parents: Sequence[str]) -> float:
    if child in parents:
        raise ValueError("child listed among its parents")
    n = data.n_rows
    k = (data.arity(child) - 1) * math.prod(data.arity(p) for p in parents)
    return log_likelihood(data, child, parents) - 0.5 * math.log(n) * k


def mi_local(data: DiscreteDataset, child: str, parents: Sequence[str]) -> float:
    """N * MI(child ; joint parent configuration)."""
    if child in parents:
        raise ValueError("child listed among its parents")
    if not parents:
        return 0.0
    return max(0.0, log_likelihood(data, child, parents) - log_likelihood(data, child, ()))


_LOCAL = {BIC: bic_local, MI: mi_local}


class LocalScorer:
    """(child, parent set) -> local score, memoized per dataset and score kind."""

    def __init__(self, data: DiscreteDataset, score: str = BIC, cache: bool = True):
        self.data = data
        self.score = score
        self._fn = _LOCAL[score]
        self._cache: dict | None = {} if cache else None
        self._lock = threading.Lock()
        self.evaluations = 0

    def __call__(self, child: str, parents: Iterable[str]) -> float:
        key = (child, tuple(sorted(parents)))
        if self._cache is not None:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        value = self._fn(self.data, child, key[1])
        with self._lock:
            self.evaluations += 1
            if self._cache is not None:
                self._cache[key] = value
        return value


def score_total(data: DiscreteDataset, dag: Dag, score: str = BIC, scorer: LocalScorer | None = None) -> ScoreValue:
    scorer = scorer or LocalScorer(data, score)
    local = {v: scorer(v, dag.parents(v)) for v in sorted(dag.nodes)}
    return ScoreValue(float(sum(local.values())), local)


def _reachability(adj: np.ndarray) -> np.ndarray:
    """reach[x, y]: a directed path of length >= 1 leads from x to y."""
    p = adj.shape[0]
    indeg = adj.sum(axis=0)
    order = []
    ready = [i for i in range(p) if indeg[i] == 0]
    indeg = indeg.copy()
    while ready:
        u = ready.pop()
        order.append(u)
        for c in np.flatnonzero(adj[u]):
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(int(c))
    reach = np.zeros_like(adj)
    for u in reversed(order):
        kids = np.flatnonzero(adj[u])
        if kids.size:
            reach[u] = adj[u] | reach[kids].any(axis=0)
    return reach


def hill_climb(
    data: DiscreteDataset,
    nodes: Sequence[str] | None = None,
    config: SearchConfig = SearchConfig(),
    scorer: LocalScorer | None = None,
    trace: bool = False,
) -> tuple[Dag, ScoreValue, SearchStats]:
    """Greedy search from the empty DAG over add / delete / reverse moves.

    Each iteration applies the single best legal move while it improves the
    score by more than ``config.epsilon``.  Ties prefer add, then delete,
    then reverse, then the lexicographically smallest (parent, child).
    """
    start = time.perf_counter()
    names = sorted(nodes if nodes is not None else data.names)
    if not names:
        raise ValueError("hill_climb needs at least one node")
    scorer = scorer or LocalScorer(data, config.score)
    if scorer.score != config.score:
        raise ValueError("scorer kind does not match config")
    p = len(names)
    stats = SearchStats()
    parents: list[set[int]] = [set() for _ in range(p)]
    local = np.array([scorer(v, ()) for v in names])
    add_delta = np.full((p, p), -np.inf)
    del_delta = np.full((p, p), -np.inf)
    adj = np.zeros((p, p), dtype=bool)
    off_diag = ~np.eye(p, dtype=bool)

    def refresh(v: int) -> None:
        pa = parents[v]
        base = local[v]
        child = names[v]
        pa_names = [names[i] for i in pa]
        room = len(pa) < config.max_parents
        for u in range(p):
            if u == v:
                continue
            if u in pa:
                add_delta[u, v] = -np.inf
                del_delta[u, v] = scorer(child, [x for x in pa_names if x != names[u]]) - base
            else:
                del_delta[u, v] = -np.inf
                add_delta[u, v] = scorer(child, pa_names + [names[u]]) - base if room else -np.inf

    for v in range(p):
        refresh(v)

    while stats.iterations < config.max_iterations and p > 1:
        reach = _reachability(adj)
        add_gain = np.where(off_diag & ~adj & ~reach.T, add_delta, -np.inf)
        del_gain = np.where(adj, del_delta, -np.inf)
        alt_path = (reach.astype(np.int32) @ adj.astype(np.int32)) > 0
        rev_gain = np.where(adj & ~alt_path, del_delta + add_delta.T, -np.inf)
        gains = (add_gain, del_gain, rev_gain)
        stats.moves_evaluated += int(sum(np.isfinite(g).sum() for g in gains))
        best_kind, best_flat, best = None, -1, -np.inf
        for kind, g in zip((ADD, DELETE, REVERSE), gains):
            flat = int(np.argmax(g))
            if g.flat[flat] > best:
                best_kind, best_flat, best = kind, flat, float(g.flat[flat])
        if best_kind is None or not best > config.epsilon:
            break
        u, v = divmod(best_flat, p)
        if best_kind == ADD:
            adj[u, v] = True
            parents[v].add(u)
            changed = [v]
        elif best_kind == DELETE:
            adj[u, v] = False
            parents[v].discard(u)
            changed = [v]
        else:
            adj[u, v] = False
            adj[v, u] = True
            parents[v].discard(u)
            parents[u].add(v)
            changed = [v, u]
        for c in changed:
            local[c] = scorer(names[c], [names[i] for i in parents[c]])
        for c in changed:
            refresh(c)
        stats.iterations += 1
        if trace:
            stats.trace.append((stats.iterations, best_kind, names[u], names[v], best))

    dag = Dag(names, [(names[u], names[v]) for u, v in zip(*np.nonzero(adj))])
    value = score_total(data, dag, config.score, scorer)
    stats.elapsed = time.perf_counter() - start
    return dag, value, stats


def format_trace(stats: SearchStats) -> str:
    return "".join(f"{i},{k},{u},{v},{g:.12g}\n" for i, k, u, v, g in stats.trace)
