"""Agglomerative clustering of variables on the divergence matrix."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .infotheory import DivergenceMatrix

# slack when comparing a linkage height against a threshold
_TOL = 1e-12


@dataclass(frozen=True)
class VariableClustering:
    threshold: float
    clusters: tuple[tuple[int, ...], ...]
    names: tuple[str, ...] = ()

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def largest(self) -> int:
        return max((len(c) for c in self.clusters), default=0)

    def member_names(self, k: int) -> list[str]:
        return [self.names[i] for i in self.clusters[k]]

    def labels(self) -> np.ndarray:
        out = np.empty(sum(len(c) for c in self.clusters), dtype=int)
        for k, c in enumerate(self.clusters):
            out[list(c)] = k
        return out


def complete_linkage(dist: np.ndarray, threshold: float) -> list[list[int]]:
    """Complete-linkage agglomeration stopped once no pair is within ``threshold``.

    Clusters are tracked by their smallest member index; among equally
    close pairs the one with the smallest (row, column) representatives
    merges first.  Returns groups sorted by smallest member.
    """
    n = dist.shape[0]
    if n == 0:
        return []
    d = np.array(dist, dtype=float)
    d[np.tril_indices(n)] = np.inf  # only i < j is used
    active = np.ones(n, dtype=bool)
    members = {i: [i] for i in range(n)}
    # cached row minima over the upper triangle
    row_min = np.full(n, np.inf)
    row_arg = np.zeros(n, dtype=int)

    def refresh(i: int) -> None:
        if i < n - 1:
            j = int(np.argmin(d[i]))
            row_min[i], row_arg[i] = d[i, j], j
        else:
            row_min[i] = np.inf

    for i in range(n):
        refresh(i)

    while True:
        a = int(np.argmin(row_min))
        if not row_min[a] <= threshold + _TOL:
            break
        b = int(row_arg[a])
        # merged cluster keeps index a (< b)
        col = np.maximum(np.concatenate([d[:a, a], d[a, a:]]), np.concatenate([d[:b, b], d[b, b:]]))
        col[a] = np.inf
        col[b] = np.inf
        d[:a, a] = col[:a]
        d[a, a + 1:] = col[a + 1:]
        d[:, b] = np.inf
        d[b, :] = np.inf
        active[b] = False
        members[a].extend(members.pop(b))
        row_min[b] = np.inf
        stale = np.flatnonzero(active & ((row_arg == a) | (row_arg == b)))
        # entries only grow on a merge, so rows pointing elsewhere stay valid
        for i in set(stale.tolist()) | {a}:
            refresh(i)
    groups = [sorted(m) for m in members.values()]
    groups.sort(key=lambda g: g[0])
    return groups


def agglomerate(div: DivergenceMatrix, threshold: float) -> VariableClustering:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    groups = complete_linkage(div.values, threshold)
    return VariableClustering(float(threshold), tuple(tuple(g) for g in groups), tuple(div.names))


def threshold_grid(step: float) -> list[float]:
    if not 0.0 < step < 1.0:
        raise ValueError("step must lie in (0, 1)")
    count = int(np.floor(1.0 / step + 1e-9))
    grid = [round(k * step, 12) for k in range(1, count + 1)]
    return [t for t in grid if t < 1.0 - 1e-12]


def _objective(c: VariableClustering) -> tuple[int, int]:
    return max(c.n_clusters, c.largest), abs(c.n_clusters - c.largest)


def recommend_threshold(
    div: DivergenceMatrix, grid: list[float], workers: int = 1
) -> tuple[float, VariableClustering]:
    """Pick the grid threshold minimizing max(#clusters, largest cluster size).

    Ties go to the most balanced profile, then the smaller threshold.
    """
    if not grid:
        raise ValueError("empty threshold grid")
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            clusterings = list(ex.map(lambda t: agglomerate(div, t), grid))
    else:
        clusterings = [agglomerate(div, t) for t in grid]
    best = min(
        zip(grid, clusterings), key=lambda tc: (*_objective(tc[1]), tc[0])
    )
    return best


def format_clustering(c: VariableClustering) -> str:
    return "".join(
        f"{k}: {','.join(c.names[i] for i in members)}\n" for k, members in enumerate(c.clusters)
    )


def parse_clustering(text: str, names: list[str], threshold: float = float("nan")) -> VariableClustering:
    index = {n: i for i, n in enumerate(names)}
    clusters = []
    for line in text.splitlines():
        if not line.strip():
            continue
        _, members = line.split(":", 1)
        clusters.append(tuple(sorted(index[m.strip()] for m in members.split(","))))
    clusters.sort(key=lambda c: c[0])
    return VariableClustering(threshold, tuple(clusters), tuple(names))
