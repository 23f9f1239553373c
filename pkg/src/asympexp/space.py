"""Finite metric spaces, set geometry and coarse disjoint unions.

Point sets are plain sorted ``numpy`` index arrays (``PointSet``).  Every
space is immutable after construction, so instances can be shared between
threads freely.
"""

from __future__ import annotations

from dataclasses import InitVar, dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import DisconnectedGraph, InvalidEdge, InvalidMetric, OutOfRangeIndex

GRAPH = "graph-edge-path"
EXPLICIT = "explicit"

PointSet = np.ndarray
EXPLICIT_TRIANGLE_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """One piece: points ``0..n-1`` with a distance matrix.

    Graph pieces (``source == GRAPH``) also keep their edge list, which the
    Laplacian needs.
    """

    dist: np.ndarray
    source: str = EXPLICIT
    edges: tuple[tuple[int, int], ...] | None = None
    check_triangle: InitVar[bool] = True

    def __post_init__(self, check_triangle: bool) -> None:
        d = np.asarray(self.dist, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] == 0:
            raise InvalidMetric(f"distance matrix must be square and non-empty, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InvalidMetric("distances must be finite")
        if np.any(d < 0):
            raise InvalidMetric("distances must be non-negative")
        if np.any(np.diag(d) != 0):
            raise InvalidMetric("dist(x, x) must be 0")
        if not np.array_equal(d, d.T):
            raise InvalidMetric("distance matrix must be symmetric")
        n = d.shape[0]
        off = d + np.eye(n)
        if np.any(off[~np.eye(n, dtype=bool)] <= 0):
            raise InvalidMetric("distinct points must have positive distance")
        if self.source == GRAPH:
            if self.edges is None:
                raise InvalidMetric("graph pieces must carry their edge list")
            if not np.array_equal(d, np.round(d)):
                raise InvalidMetric("graph edge-path distances must be integers")
            if check_triangle:
                _check_triangle(d, 0.0)
        elif self.source == EXPLICIT:
            if check_triangle:
                _check_triangle(d, EXPLICIT_TRIANGLE_TOL)
        else:
            raise InvalidMetric(f"unknown source tag {self.source!r}")
        object.__setattr__(self, "dist", _readonly(d))
        if self.edges is not None:
            object.__setattr__(self, "edges", tuple((int(u), int(v)) for u, v in self.edges))

    @classmethod
    def from_edges(cls, edges: Iterable[Sequence[int]], n: int) -> "FiniteMetricSpace":
        return edge_path_metric(edges, n)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def is_graph(self) -> bool:
        return self.source == GRAPH

    @cached_property
    def diam(self) -> float:
        return float(self.dist.max())

    @cached_property
    def distances(self) -> np.ndarray:
        """Sorted distinct distance values, including 0."""
        return np.unique(self.dist)

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Boolean adjacency of the 1-neighbourhood graph (d == 1 for graphs)."""
        a = (self.dist <= 1) & (self.dist > 0)
        a.setflags(write=False)
        return a

    def ball(self, x: int, R: float) -> PointSet:
        return np.flatnonzero(self.dist[x] <= R)

    def points(self) -> PointSet:
        return np.arange(self.n)


def _check_triangle(d: np.ndarray, tol: float) -> None:
    n = d.shape[0]
    for k in range(n):
        if np.any(d[:, k, None] + d[None, k, :] < d - tol):
            raise InvalidMetric("triangle inequality violated")


def edge_path_metric(edges: Iterable[Sequence[int]], n: int) -> FiniteMetricSpace:
    """All-pairs breadth-first-search distances of a simple connected graph."""
    if n < 1:
        raise InvalidEdge("graph needs at least one vertex")
    seen: set[tuple[int, int]] = set()
    clean: list[tuple[int, int]] = []
    for e in edges:
        if len(e) != 2:
            raise InvalidEdge(f"edge {e!r} is not a pair")
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < n and 0 <= v < n):
            raise InvalidEdge(f"edge ({u}, {v}) out of range for n={n}")
        if u == v:
            raise InvalidEdge(f"loop at vertex {u}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise InvalidEdge(f"multi-edge {key}")
        seen.add(key)
        clean.append(key)
    rows = [u for u, v in clean] + [v for u, v in clean]
    cols = [v for u, v in clean] + [u for u, v in clean]
    g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, labels = connected_components(g, directed=False)
    if ncomp > 1:
        stranded = tuple(int(i) for i in np.flatnonzero(labels != labels[0]))
        comp = tuple(int(i) for i in np.flatnonzero(labels == labels[np.min(stranded)]))
        raise DisconnectedGraph(
            f"graph has {ncomp} components; vertices {list(comp)} are not reachable from vertex 0",
            comp,
        )
    d = shortest_path(g, method="D", unweighted=True, directed=False)
    # BFS distances satisfy the triangle inequality by construction
    return FiniteMetricSpace(d, GRAPH, tuple(clean), check_triangle=False)


def point_set(A: Iterable[int] | np.ndarray, n: int) -> PointSet:
    """Validate and canonicalise a set of indices into ``0..n-1``."""
    a = np.unique(np.asarray(list(A) if not isinstance(A, np.ndarray) else A, dtype=np.int64))
    if a.size and (a[0] < 0 or a[-1] >= n):
        raise OutOfRangeIndex(f"point index out of range 0..{n - 1}: {a.tolist()}")
    return a


def _mask(A: PointSet, n: int) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    m[A] = True
    return m


def dist_to_set(X: FiniteMetricSpace, A: Iterable[int]) -> np.ndarray:
    """d(x, A) for every x; +inf everywhere when A is empty."""
    A = point_set(A, X.n)
    if A.size == 0:
        return np.full(X.n, np.inf)
    return X.dist[A].min(axis=0)


def r_boundary(X: FiniteMetricSpace, A: Iterable[int], R: float) -> PointSet:
    """Outer R-boundary: points outside A at distance at most R from A."""
    A = point_set(A, X.n)
    near = dist_to_set(X, A) <= R
    return np.flatnonzero(near & ~_mask(A, X.n))


def inner_boundary(X: FiniteMetricSpace, A: Iterable[int], R: float) -> PointSet:
    """Inner R-boundary: points of A at distance at most R from the complement."""
    A = point_set(A, X.n)
    inside = _mask(A, X.n)
    comp = np.flatnonzero(~inside)
    near = dist_to_set(X, comp) <= R
    return np.flatnonzero(near & inside)


def r_neighborhood(X: FiniteMetricSpace, A: Iterable[int], R: float) -> PointSet:
    return np.flatnonzero(dist_to_set(X, A) <= R)


def set_distance(X: FiniteMetricSpace, A: Iterable[int], B: Iterable[int]) -> float:
    A = point_set(A, X.n)
    B = point_set(B, X.n)
    if A.size == 0 or B.size == 0:
        return np.inf
    return float(X.dist[np.ix_(A, B)].min())


def set_diameter(X: FiniteMetricSpace, A: Iterable[int]) -> float:
    A = point_set(A, X.n)
    if A.size == 0:
        return 0.0
    return float(X.dist[np.ix_(A, A)].max())


def d_connected(X: FiniteMetricSpace, D: float) -> bool:
    g = csr_matrix((X.dist <= D) & (X.dist > 0))
    ncomp, _ = connected_components(g, directed=False)
    return ncomp == 1


@dataclass(frozen=True, eq=False)
class SpaceSequence:
    """Finite prefix of a coarse disjoint union.

    ``gaps`` is ``None`` for the canonical rule, otherwise the explicit
    cross-piece distances in upper-triangular row-major order
    (g_12, g_13, ..., g_23, ...).
    """

    pieces: tuple[FiniteMetricSpace, ...]
    gaps: tuple[float, ...] | None = None
    _gap_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        pieces = tuple(self.pieces)
        if not pieces:
            raise InvalidMetric("a space sequence needs at least one piece")
        object.__setattr__(self, "pieces", pieces)
        m = len(pieces)
        g = np.zeros((m, m))
        if self.gaps is None:
            for i in range(m):
                for j in range(m):
                    if i != j:
                        # 1-based piece indices in the canonical gap formula
                        g[i, j] = (i + 1) + (j + 1) + pieces[i].diam + pieces[j].diam
        else:
            gaps = tuple(float(x) for x in self.gaps)
            if len(gaps) != m * (m - 1) // 2:
                raise InvalidMetric(f"expected {m * (m - 1) // 2} explicit gaps, got {len(gaps)}")
            it = iter(gaps)
            for i in range(m):
                for j in range(i + 1, m):
                    g[i, j] = g[j, i] = next(it)
            if not np.all(np.isfinite(g)) or np.any(g[~np.eye(m, dtype=bool)] <= 0):
                raise InvalidMetric("explicit gaps must be positive and finite")
            for i in range(m):
                for j in range(m):
                    if i != j and pieces[i].diam > 2 * g[i, j] + EXPLICIT_TRIANGLE_TOL:
                        raise InvalidMetric(f"gap between pieces {i} and {j} is below half a diameter")
            for k in range(m):
                t = g[:, k, None] + g[None, k, :]
                np.fill_diagonal(t, 0)
                off = ~np.eye(m, dtype=bool)
                off[k, :] = False
                off[:, k] = False
                if np.any(g[off] > t[off] + EXPLICIT_TRIANGLE_TOL):
                    raise InvalidMetric("explicit gaps violate the triangle inequality")
            object.__setattr__(self, "gaps", gaps)
        g.setflags(write=False)
        object.__setattr__(self, "_gap_matrix", g)

    @classmethod
    def of(cls, *pieces: FiniteMetricSpace, gaps: Sequence[float] | None = None) -> "SpaceSequence":
        return cls(tuple(pieces), None if gaps is None else tuple(gaps))

    def __len__(self) -> int:
        return len(self.pieces)

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.array([p.n for p in self.pieces], dtype=np.int64)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)]).astype(np.int64)

    @property
    def total(self) -> int:
        return int(self.offsets[-1])

    @cached_property
    def piece_index(self) -> np.ndarray:
        """Piece index of every global point."""
        return np.repeat(np.arange(len(self.pieces)), self.sizes)

    def locate(self, x: int) -> tuple[int, int]:
        if not 0 <= x < self.total:
            raise OutOfRangeIndex(f"global point {x} out of range 0..{self.total - 1}")
        k = int(self.piece_index[x])
        return k, int(x - self.offsets[k])

    def global_index(self, piece: int, local: Iterable[int] | int) -> np.ndarray | int:
        if isinstance(local, (int, np.integer)):
            return int(self.offsets[piece] + local)
        return point_set(local, self.pieces[piece].n) + self.offsets[piece]

    def piece_slice(self, k: int) -> slice:
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def gap(self, i: int, j: int) -> float:
        return float(self._gap_matrix[i, j])

    def union_metric(self, x: int, y: int) -> float:
        (i, a), (j, b) = self.locate(x), self.locate(y)
        if i == j:
            return float(self.pieces[i].dist[a, b])
        return self.gap(i, j)

    def union_dist(self) -> np.ndarray:
        """Full distance matrix of the prefix (dense, N x N)."""
        pi = self.piece_index
        d = self._gap_matrix[np.ix_(pi, pi)].copy()
        for k, p in enumerate(self.pieces):
            s = self.piece_slice(k)
            d[s, s] = p.dist
        return d

    def as_space(self) -> FiniteMetricSpace:
        """The prefix as a single explicit finite metric space."""
        return FiniteMetricSpace(self.union_dist(), EXPLICIT, check_triangle=False)


Space = Union[FiniteMetricSpace, SpaceSequence]


def growth_function(X: Space, R: float) -> int:
    """Maximal closed-ball cardinality at radius R."""
    if isinstance(X, FiniteMetricSpace):
        return int((X.dist <= R).sum(axis=1).max())
    best = 0
    for k, p in enumerate(X.pieces):
        inner = int((p.dist <= R).sum(axis=1).max())
        outer = sum(int(X.sizes[j]) for j in range(len(X)) if j != k and X.gap(k, j) <= R)
        best = max(best, inner + outer)
    return best
