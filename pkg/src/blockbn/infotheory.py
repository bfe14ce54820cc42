"""Plug-in entropy, mutual information, NMI and the variable divergence matrix.

All quantities are in nats.  NMI and the divergence ``1 - NMI`` do not
depend on the log base.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataio import DiscreteDataset


@dataclass
class DivergenceMatrix:
    names: list[str]
    values: np.ndarray

    @property
    def size(self) -> int:
        return len(self.names)

    def __getitem__(self, ij):
        return self.values[ij]


def _dense(x) -> tuple[np.ndarray, int]:
    x = np.asarray(x)
    if x.dtype.kind in "iu" and x.size and x.min() >= 0 and x.max() < 4 * x.size + 64:
        return x.astype(np.int64, copy=False), int(x.max()) + 1
    _, inv = np.unique(x, return_inverse=True)
    inv = inv.reshape(-1)
    return inv.astype(np.int64), int(inv.max()) + 1 if inv.size else 0


def _entropy_from_counts(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def entropy(column, arity: int | None = None) -> float:
    """Plug-in entropy of a column of category codes."""
    col, r = _dense(column)
    if col.size == 0:
        raise ValueError("entropy of an empty column")
    counts = np.bincount(col, minlength=max(r, arity or 0))
    return _entropy_from_counts(counts, col.size)


def _joint_counts(x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    x, rx = _dense(x)
    y, ry = _dense(y)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.size} vs {y.size}")
    n = x.size
    joint = np.bincount(x * ry + y, minlength=rx * ry).reshape(rx, ry)
    return joint, joint.sum(axis=1), joint.sum(axis=0), n


def _mi_from_table(joint, cx, cy, n) -> float:
    if n == 0:
        return 0.0
    i, j = np.nonzero(joint)
    pxy = joint[i, j] / n
    px = cx[i] / n
    py = cy[j] / n
    mi = float(np.sum(pxy * (np.log(pxy) - np.log(px) - np.log(py))))
    return max(mi, 0.0)


def mutual_information(x, y) -> float:
    return _mi_from_table(*_joint_counts(x, y))


def _nmi(mi: float, hx: float, hy: float) -> float:
    denom = hx + hy
    if denom <= 0.0:
        return 0.0
    return min(1.0, max(0.0, 2.0 * mi / denom))


def nmi(x, y) -> float:
    """Normalized mutual information (symmetric uncertainty); 0 if both columns are constant."""
    joint, cx, cy, n = _joint_counts(x, y)
    return _nmi(_mi_from_table(joint, cx, cy, n), _entropy_from_counts(cx, n), _entropy_from_counts(cy, n))


def divergence(x, y) -> float:
    return 1.0 - nmi(x, y)


def divergence_matrix(data: DiscreteDataset, workers: int = 1) -> DivergenceMatrix:
    p = data.n_vars
    n = data.n_rows
    cols = data.columns
    ent = [_entropy_from_counts(np.bincount(c, minlength=r), n) for c, r in zip(cols, data.arities)]

    def row(i: int) -> list[float]:
        out = []
        for j in range(i + 1, p):
            ri, rj = data.arities[i], data.arities[j]
            joint = np.bincount(cols[i] * rj + cols[j], minlength=ri * rj).reshape(ri, rj)
            mi = _mi_from_table(joint, joint.sum(axis=1), joint.sum(axis=0), n)
            out.append(1.0 - _nmi(mi, ent[i], ent[j]))
        return out

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(row, range(p)))
    else:
        rows = [row(i) for i in range(p)]
    values = np.zeros((p, p))
    for i, r in enumerate(rows):
        values[i, i + 1:] = r
        values[i + 1:, i] = r
    return DivergenceMatrix(list(data.names), values)


def write_divergence_csv(div: DivergenceMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([""] + div.names)
        for name, row in zip(div.names, div.values):
            w.writerow([name] + [f"{v:.12g}" for v in row])


def read_divergence_csv(path) -> DivergenceMatrix:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    names = rows[0][1:]
    values = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return DivergenceMatrix(names, values)
