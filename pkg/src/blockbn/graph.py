"""Immutable DAGs, edge moves, topological order and structural Hamming distance."""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from typing import Iterable

ADD, DELETE, REVERSE = "add", "delete", "reverse"
MOVE_KINDS = (ADD, DELETE, REVERSE)


class CycleError(ValueError):
    pass


@dataclass(frozen=True)
class Move:
    kind: str
    parent: str
    child: str

    def inverse(self) -> "Move":
        if self.kind == ADD:
            return Move(DELETE, self.parent, self.child)
        if self.kind == DELETE:
            return Move(ADD, self.parent, self.child)
        return Move(REVERSE, self.child, self.parent)


class Dag:
    """A directed acyclic graph over named nodes; never mutated after construction."""

    __slots__ = ("nodes", "edges", "_parents", "_children")

    def __init__(self, nodes: Iterable[str], edges: Iterable[tuple[str, str]] = ()):
        nodes = tuple(nodes)
        if len(set(nodes)) != len(nodes):
            raise ValueError("duplicate node names")
        edges = frozenset((str(u), str(v)) for u, v in edges)
        parents: dict[str, set[str]] = {n: set() for n in nodes}
        children: dict[str, set[str]] = {n: set() for n in nodes}
        for u, v in edges:
            if u not in parents or v not in parents:
                raise KeyError(f"edge {u}->{v} references an unknown node")
            if u == v:
                raise CycleError(f"self-loop on {u}")
            parents[v].add(u)
            children[u].add(v)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_parents", {k: frozenset(v) for k, v in parents.items()})
        object.__setattr__(self, "_children", {k: frozenset(v) for k, v in children.items()})
        if len(self.topological_order()) != len(nodes):
            raise CycleError("edge set contains a cycle")

    def __setattr__(self, key, value):
        raise AttributeError("Dag is immutable")

    def parents(self, node: str) -> frozenset[str]:
        return self._parents[node]

    def children(self, node: str) -> frozenset[str]:
        return self._children[node]

    def has_edge(self, u: str, v: str) -> bool:
        return (u, v) in self.edges

    def __contains__(self, node: str) -> bool:
        return node in self._parents

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other):
        if not isinstance(other, Dag):
            return NotImplemented
        return set(self.nodes) == set(other.nodes) and self.edges == other.edges

    def __hash__(self):
        return hash((frozenset(self.nodes), self.edges))

    def __repr__(self):
        return f"Dag({len(self.nodes)} nodes, {sorted(self.edges)})"

    def reaches(self, src: str, dst: str) -> bool:
        """True when a directed path src -> ... -> dst exists (BFS, O(V+E))."""
        if src == dst:
            return True
        seen = {src}
        queue = deque([src])
        while queue:
            for c in self._children[queue.popleft()]:
                if c == dst:
                    return True
                if c not in seen:
                    seen.add(c)
                    queue.append(c)
        return False

    def topological_order(self) -> list[str]:
        """Kahn's algorithm; ready nodes leave in name order."""
        indeg = {n: len(p) for n, p in self._parents.items()}
        heap = [n for n, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            u = heapq.heappop(heap)
            order.append(u)
            for c in self._children[u]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    heapq.heappush(heap, c)
        return order

    def subgraph(self, nodes: Iterable[str]) -> "Dag":
        keep = [n for n in self.nodes if n in set(nodes)]
        ks = set(keep)
        return Dag(keep, [(u, v) for u, v in self.edges if u in ks and v in ks])

    def sorted_edges(self) -> list[tuple[str, str]]:
        return sorted(self.edges)


def _check_nodes(dag: Dag, *names: str) -> None:
    for n in names:
        if n not in dag:
            raise KeyError(f"unknown node {n!r}")


def apply_move(dag: Dag, move: Move) -> Dag | None:
    """Return the moved DAG, or None when the move would create a cycle."""
    u, v = move.parent, move.child
    _check_nodes(dag, u, v)
    if u == v:
        raise ValueError("self-loop move")
    if move.kind == ADD:
        if dag.has_edge(u, v):
            raise ValueError(f"edge {u}->{v} already present")
        if dag.reaches(v, u):
            return None
        return Dag(dag.nodes, dag.edges | {(u, v)})
    if move.kind == DELETE:
        if not dag.has_edge(u, v):
            raise ValueError(f"edge {u}->{v} absent")
        return Dag(dag.nodes, dag.edges - {(u, v)})
    if move.kind == REVERSE:
        if not dag.has_edge(u, v):
            raise ValueError(f"edge {u}->{v} absent")
        without = Dag(dag.nodes, dag.edges - {(u, v)})
        if without.reaches(u, v):
            return None
        return Dag(dag.nodes, without.edges | {(v, u)})
    raise ValueError(f"unknown move kind {move.kind!r}")


def topological_order(dag: Dag) -> list[str]:
    return dag.topological_order()


def shd(a: Dag, b: Dag) -> int:
    """Additions + deletions + reversals turning ``a`` into ``b``; a reversal counts once."""
    if set(a.nodes) != set(b.nodes):
        raise ValueError("SHD requires identical node sets")
    pairs = {frozenset(e) for e in a.edges} | {frozenset(e) for e in b.edges}
    dist = 0
    for pair in pairs:
        x, y = sorted(pair)
        ea = (x, y) if a.has_edge(x, y) else (y, x) if a.has_edge(y, x) else None
        eb = (x, y) if b.has_edge(x, y) else (y, x) if b.has_edge(y, x) else None
        if ea != eb:
            dist += 1
    return dist


def format_edges(dag: Dag) -> str:
    return "".join(f"{u} -> {v}\n" for u, v in dag.sorted_edges())


def parse_edges(text: str, nodes: Iterable[str]) -> Dag:
    edges = []
    for line in text.splitlines():
        if line.strip():
            u, v = (s.strip() for s in line.split("->"))
            edges.append((u, v))
    return Dag(nodes, edges)
