"""Interference graphs, cluster partitions and greedy independent sets."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import GraphError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InterferenceGraph:
    """Fixed interference neighborhoods ``N_i`` over units ``0..n-1``.

    Neighborhoods may be asymmetric: ``j in N_i`` means unit ``j``'s
    treatment enters unit ``i``'s exposure.
    """

    n: int
    neighborhoods: tuple[tuple[int, ...], ...]
    _adjacency: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 0:
            raise GraphError(f"n must be non-negative, got {self.n}")
        if len(self.neighborhoods) != self.n:
            raise GraphError(
                f"expected {self.n} neighborhoods, got {len(self.neighborhoods)}"
            )
        adj = np.zeros((self.n, self.n), dtype=np.int64)
        for i, nbrs in enumerate(self.neighborhoods):
            seen = set()
            for j in nbrs:
                if j == i:
                    raise GraphError(f"self-loop: unit {i} lists itself as a neighbor")
                if not 0 <= j < self.n:
                    raise GraphError(f"unit {i} has out-of-range neighbor {j} (n={self.n})")
                if j in seen:
                    raise GraphError(f"unit {i} lists neighbor {j} twice")
                seen.add(j)
                adj[i, j] = 1
        adj.setflags(write=False)
        object.__setattr__(self, "_adjacency", adj)

    def degree(self, i: int) -> int:
        return len(self.neighborhoods[i])

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.neighborhoods[i]

    @property
    def degrees(self) -> list[int]:
        return [len(nb) for nb in self.neighborhoods]

    @property
    def adjacency(self) -> np.ndarray:
        """Read-only matrix with ``A[i, j] = 1`` iff ``j in N_i``."""
        return self._adjacency

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(self._adjacency | self._adjacency.T)) // 2

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self._adjacency, self._adjacency.T))

    def symmetrized(self) -> InterferenceGraph:
        if self.is_symmetric():
            return self
        sym = self._adjacency | self._adjacency.T
        return InterferenceGraph(
            self.n, tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in sym)
        )


def build_graph(
    n: int, neighborhoods: Mapping[int, Iterable[int]] | Sequence[Iterable[int]]
) -> InterferenceGraph:
    """Build a graph from a per-unit mapping or list of neighbor indices.

    Units missing from a mapping get an empty neighborhood.
    """
    if isinstance(neighborhoods, Mapping):
        bad = [k for k in neighborhoods if not 0 <= int(k) < n]
        if bad:
            raise GraphError(f"neighborhood keys out of range: {bad}")
        rows = [tuple(int(j) for j in neighborhoods.get(i, ())) for i in range(n)]
    else:
        rows = [tuple(int(j) for j in nb) for nb in neighborhoods]
    g = InterferenceGraph(n, tuple(rows))
    if not g.is_symmetric():
        logger.warning("interference graph is asymmetric (directed neighborhoods)")
    return g


def from_edges(n: int, edges: Iterable[tuple[int, int]]) -> InterferenceGraph:
    """Undirected graph from an edge list."""
    nbrs: list[set[int]] = [set() for _ in range(n)]
    for a, b in edges:
        if a == b:
            raise GraphError(f"self-loop: unit {a}")
        if not (0 <= a < n and 0 <= b < n):
            raise GraphError(f"edge ({a}, {b}) out of range (n={n})")
        nbrs[a].add(b)
        nbrs[b].add(a)
    return InterferenceGraph(n, tuple(tuple(sorted(s)) for s in nbrs))


def path_graph(n: int) -> InterferenceGraph:
    return from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> InterferenceGraph:
    if n < 3:
        raise GraphError("a cycle needs at least 3 units")
    return from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def star_graph(n: int) -> InterferenceGraph:
    """Unit 0 is the center, units 1..n-1 are leaves."""
    return from_edges(n, [(0, i) for i in range(1, n)])


def complete_graph(n: int) -> InterferenceGraph:
    return from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def empty_graph(n: int) -> InterferenceGraph:
    return InterferenceGraph(n, tuple(() for _ in range(n)))


@dataclass(frozen=True)
class ClusterPartition:
    """Assignment of every unit to one of ``K`` non-empty clusters."""

    K: int
    assignment: tuple[int, ...]

    def __post_init__(self):
        if self.K < 1:
            raise GraphError(f"need at least one cluster, got K={self.K}")
        for i, k in enumerate(self.assignment):
            if not 0 <= k < self.K:
                raise GraphError(f"unit {i} assigned to cluster {k}, outside [0, {self.K})")
        sizes = self.sizes
        empty = [k for k, s in enumerate(sizes) if s == 0]
        if empty:
            raise GraphError(f"clusters {empty} are empty; every n_k must be positive")

    @classmethod
    def from_assignment(cls, assignment: Sequence[int], K: int | None = None):
        assignment = tuple(int(k) for k in assignment)
        if K is None:
            K = max(assignment) + 1 if assignment else 0
        return cls(K, assignment)

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def sizes(self) -> list[int]:
        sizes = [0] * self.K
        for k in self.assignment:
            sizes[k] += 1
        return sizes

    def members(self, k: int) -> list[int]:
        return [i for i, c in enumerate(self.assignment) if c == k]

    def clusters_touching(self, g: InterferenceGraph, i: int) -> set[int]:
        """Clusters of unit ``i`` and its neighbors; ``len`` of this is ``u_i``."""
        return {self.assignment[i]} | {self.assignment[j] for j in g.neighbors(i)}


def greedy_independent_set(g: InterferenceGraph) -> list[int]:
    """Maximal independent set by repeated minimum-residual-degree selection.

    Neighborhoods are symmetrized first. Ties go to the lowest index, so the
    result is deterministic. Returned sorted.
    """
    sym = g.symmetrized()
    alive = set(range(sym.n))
    nbrs = [set(sym.neighbors(i)) for i in range(sym.n)]
    chosen = []
    while alive:
        pick = min(alive, key=lambda u: (len(nbrs[u] & alive), u))
        chosen.append(pick)
        alive -= nbrs[pick] | {pick}
    return sorted(chosen)


def is_independent_set(g: InterferenceGraph, units: Iterable[int]) -> bool:
    sym = g.symmetrized()
    s = set(units)
    return all(not (set(sym.neighbors(i)) & s) for i in s)


def is_maximal_independent_set(g: InterferenceGraph, units: Iterable[int]) -> bool:
    sym = g.symmetrized()
    s = set(units)
    if not is_independent_set(sym, s):
        return False
    return all(set(sym.neighbors(u)) & s for u in range(sym.n) if u not in s)
