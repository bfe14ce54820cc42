"""Lossy compression of a cluster's value combinations into one code column."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataio import DiscreteDataset
from .varcluster import complete_linkage

MOST_FREQUENT, HAMMING = "freq", "hamming"
METHODS = (MOST_FREQUENT, HAMMING)

Combination = tuple[int, ...]


@dataclass(frozen=True)
class CombinationStats:
    combos: tuple[Combination, ...]
    counts: tuple[int, ...]
    n: int

    @property
    def probabilities(self) -> list[float]:
        return [c / self.n for c in self.counts]

    def __len__(self):
        return len(self.combos)


@dataclass
class Codebook:
    method: str
    members: list[str]
    combos: list[Combination]
    counts: list[int]
    codes: list[int]  # code of combos[i]
    n_codes: int
    alpha: float | None = None
    min_count: int | None = None
    threshold: float | None = None
    _lookup: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self._lookup = dict(zip(self.combos, self.codes))

    @property
    def probabilities(self) -> list[float]:
        n = sum(self.counts)
        return [c / n for c in self.counts]

    @property
    def n_frequent(self) -> int:
        """``l`` for most-frequent coding; the number of groups otherwise."""
        return self.n_codes

    def code_of(self, combo: Combination) -> int | None:
        return self._lookup.get(tuple(combo))

    def to_dict(self) -> dict:
        doc = {"method": self.method, "members": list(self.members), "n_codes": self.n_codes}
        if self.method == MOST_FREQUENT:
            doc.update(alpha=self.alpha, min_count=self.min_count)
        else:
            doc["threshold"] = self.threshold
        doc["code_map"] = [
            {"combination": list(c), "count": k, "code": g}
            for c, k, g in zip(self.combos, self.counts, self.codes)
        ]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "Codebook":
        cm = doc["code_map"]
        return cls(
            doc["method"],
            list(doc["members"]),
            [tuple(e["combination"]) for e in cm],
            [int(e["count"]) for e in cm],
            [int(e["code"]) for e in cm],
            int(doc["n_codes"]),
            alpha=doc.get("alpha"),
            min_count=doc.get("min_count"),
            threshold=doc.get("threshold"),
        )


@dataclass(frozen=True)
class Infeasible:
    """Most-frequent coding cannot meet the minimum count for its frequent set."""

    members: tuple[str, ...]
    l: int
    offending: tuple[tuple[Combination, int], ...]
    min_count: int

    def describe(self) -> str:
        combo, count = self.offending[0]
        return (
            f"cluster {','.join(self.members)}: frequent combination {combo} "
            f"has {count} < {self.min_count} observations"
        )


def _combination_matrix(data: DiscreteDataset, members: Sequence[str]) -> np.ndarray:
    return np.column_stack([data.column(m) for m in members])


def enumerate_combinations(data: DiscreteDataset, members: Sequence[str]) -> CombinationStats:
    """Distinct combinations by descending count, ties in lexicographic order."""
    if not members:
        raise ValueError("empty cluster")
    rows = _combination_matrix(data, members)
    uniq, counts = np.unique(rows, axis=0, return_counts=True)  # lexicographic rows
    order = np.argsort(-counts, kind="stable")
    combos = tuple(tuple(int(v) for v in uniq[i]) for i in order)
    return CombinationStats(combos, tuple(int(counts[i]) for i in order), data.n_rows)


def hamming(a: Sequence[int], b: Sequence[int]) -> int:
    if len(a) != len(b):
        raise ValueError("combinations of different length")
    return sum(x != y for x, y in zip(a, b))


def _pairwise_hamming(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros((len(x), len(y)), dtype=np.int64)
    for j in range(x.shape[1]):
        out += x[:, j, None] != y[None, :, j]
    return out


def frequent_prefix_length(counts: Sequence[int], n: int, alpha: float) -> int:
    """Smallest l whose top-l combinations cover at least 1 - alpha of the rows."""
    target = 1.0 - alpha
    cum = 0
    for l, c in enumerate(counts, start=1):
        cum += c
        if cum / n >= target:
            return l
    return len(counts)


def build_most_frequent_codebook(
    combos: CombinationStats,
    alpha: float = 0.05,
    min_count: int = 5,
    members: Sequence[str] = (),
) -> Codebook | Infeasible:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    l = frequent_prefix_length(combos.counts, combos.n, alpha)
    offending = tuple(
        (combos.combos[i], combos.counts[i]) for i in range(l) if combos.counts[i] < min_count
    )
    if offending:
        return Infeasible(tuple(members), l, offending, min_count)
    codes = list(range(l))
    if len(combos) > l:
        freq = np.array(combos.combos[:l])
        rare = np.array(combos.combos[l:])
        # argmin takes the first minimum, i.e. the most frequent nearest combination
        codes += np.argmin(_pairwise_hamming(rare, freq), axis=1).tolist()
    return Codebook(
        MOST_FREQUENT,
        list(members),
        list(combos.combos),
        list(combos.counts),
        codes,
        l,
        alpha=alpha,
        min_count=min_count,
    )


def build_hamming_codebook(
    combos: CombinationStats, threshold: float = 0.95, members: Sequence[str] = ()
) -> Codebook:
    """Complete-linkage grouping of combinations under normalized Hamming distance."""
    if not len(combos):
        raise ValueError("no combinations")
    width = len(combos.combos[0])
    lex = sorted(range(len(combos)), key=lambda i: combos.combos[i])
    mat = np.array([combos.combos[i] for i in lex])
    dist = _pairwise_hamming(mat, mat) / width
    groups = [[lex[i] for i in g] for g in complete_linkage(dist, threshold)]
    mass = [sum(combos.counts[i] for i in g) for g in groups]
    first = [min(combos.combos[i] for i in g) for g in groups]
    ranked = sorted(range(len(groups)), key=lambda k: (-mass[k], first[k]))
    codes = [0] * len(combos)
    for code, k in enumerate(ranked):
        for i in groups[k]:
            codes[i] = code
    return Codebook(
        HAMMING,
        list(members),
        list(combos.combos),
        list(combos.counts),
        codes,
        len(groups),
        threshold=threshold,
    )


def build_codebook(
    data: DiscreteDataset,
    members: Sequence[str],
    method: str,
    alpha: float = 0.05,
    min_count: int = 5,
    threshold: float = 0.95,
) -> Codebook | Infeasible:
    stats = enumerate_combinations(data, members)
    if method == MOST_FREQUENT:
        return build_most_frequent_codebook(stats, alpha, min_count, members)
    if method == HAMMING:
        return build_hamming_codebook(stats, threshold, members)
    raise ValueError(f"unknown compression method {method!r}")


def _nearest_codes(book: Codebook, unseen: np.ndarray) -> np.ndarray:
    if book.method == MOST_FREQUENT:
        refs = np.array(book.combos[: book.n_codes])
        ref_codes = np.arange(book.n_codes)
    else:
        # known combinations by descending count: first minimum = most probable
        refs = np.array(book.combos)
        ref_codes = np.array(book.codes)
    return ref_codes[np.argmin(_pairwise_hamming(unseen, refs), axis=1)]


def encode_column(data: DiscreteDataset, members: Sequence[str], book: Codebook) -> np.ndarray:
    if list(members) != list(book.members):
        raise ValueError("codebook was built for a different cluster")
    rows = _combination_matrix(data, members)
    uniq, inverse = np.unique(rows, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    codes = np.empty(len(uniq), dtype=np.int64)
    missing = []
    for k, row in enumerate(uniq):
        g = book.code_of(tuple(int(v) for v in row))
        if g is None:
            missing.append(k)
        else:
            codes[k] = g
    if missing:
        codes[missing] = _nearest_codes(book, uniq[missing])
    return codes[inverse]
