"""Constructors for the graph families used as examples and counterexamples."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from .errors import GenerationFailed
from .space import (
    EXPLICIT,
    FiniteMetricSpace,
    SpaceSequence,
    edge_path_metric,
)

FAMILIES = ("cycle", "path", "complete", "hypercube", "random-regular", "glued", "interleaved")
MAX_REJECTIONS = 1000


@dataclass
class GeneratorSpec:
    """Provenance record for a generated sequence."""

    family: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


def cycle(n: int) -> FiniteMetricSpace:
    if n < 3:
        raise ValueError(f"cycle needs n >= 3, got {n}")
    return edge_path_metric([(i, (i + 1) % n) for i in range(n)], n)


def cayley_cycle(n: int) -> FiniteMetricSpace:
    """Cayley graph of Z/nZ for generator 1, including the degenerate n = 1, 2."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if n <= 2:
        return path(n)
    return cycle(n)


def path(n: int) -> FiniteMetricSpace:
    if n < 1:
        raise ValueError(f"path needs n >= 1, got {n}")
    return edge_path_metric([(i, i + 1) for i in range(n - 1)], n)


def complete(n: int) -> FiniteMetricSpace:
    if n < 1:
        raise ValueError(f"complete graph needs n >= 1, got {n}")
    return edge_path_metric([(i, j) for i in range(n) for j in range(i + 1, n)], n)


def hypercube(dim: int) -> FiniteMetricSpace:
    if dim < 0:
        raise ValueError("dimension must be non-negative")
    n = 1 << dim
    return edge_path_metric([(x, x ^ (1 << b)) for x in range(n) for b in range(dim) if x < x ^ (1 << b)], n)


def _is_connected(n: int, edges: list[tuple[int, int]]) -> bool:
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = [False] * n
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                stack.append(v)
    return all(seen)


def random_regular(n: int, k: int, seed: int | np.random.SeedSequence | None = 0) -> FiniteMetricSpace:
    """Simple connected k-regular graph by configuration-model pairing.

    Whole pairings are rejected when they contain a loop, a multi-edge or
    leave the graph disconnected.  Expander with high probability for k >= 3.
    """
    if k < 3:
        raise ValueError(f"random-regular needs degree >= 3, got {k}")
    if k >= n:
        raise ValueError(f"random-regular needs degree < n, got k={k}, n={n}")
    if (n * k) % 2:
        raise ValueError(f"n * k must be even, got n={n}, k={k}")
    rng = np.random.default_rng(seed)
    stubs = np.repeat(np.arange(n), k)
    for _ in range(MAX_REJECTIONS):
        perm = rng.permutation(stubs)
        u, v = perm[0::2], perm[1::2]
        if np.any(u == v):
            continue
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        keys = lo * n + hi
        if np.unique(keys).size != keys.size:
            continue
        order = np.argsort(keys, kind="stable")
        edges = [(int(a), int(b)) for a, b in zip(lo[order], hi[order])]
        if not _is_connected(n, edges):
            continue
        return edge_path_metric(edges, n)
    raise GenerationFailed(f"no simple connected {k}-regular graph on {n} vertices after {MAX_REJECTIONS} pairings")


def glue_example(X: FiniteMetricSpace, F: FiniteMetricSpace, x_attach: int = 0, y_attach: int = 0) -> FiniteMetricSpace:
    """Disjoint union of two graphs plus one edge ``x_attach -- y_attach``.

    The points of ``F`` are shifted by ``X.n``.
    """
    if not (X.is_graph and F.is_graph):
        raise ValueError("glue_example needs two graph pieces")
    if not (0 <= x_attach < X.n and 0 <= y_attach < F.n):
        raise ValueError("attach vertices out of range")
    off = X.n
    edges = list(X.edges) + [(u + off, v + off) for u, v in F.edges] + [(x_attach, y_attach + off)]
    return edge_path_metric(edges, X.n + F.n)


def small_size(base_size: int) -> int:
    return math.isqrt(base_size - 1) + 1 if base_size > 0 else 0


def _family_piece(family: str, n: int, degree: int, seed) -> FiniteMetricSpace:
    if family == "cycle":
        return cycle(n)
    if family == "path":
        return path(n)
    if family == "complete":
        return complete(n)
    if family == "hypercube":
        dim = int(round(math.log2(n)))
        if 1 << dim != n:
            raise ValueError(f"hypercube size must be a power of two, got {n}")
        return hypercube(dim)
    if family == "random-regular":
        return random_regular(n, degree, seed)
    raise ValueError(f"family {family!r} cannot be used as a piece family")


def _piece_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(index)])


def family_sequence(family: str, sizes: Sequence[int], degree: int = 3, seed: int = 0) -> SpaceSequence:
    return SpaceSequence(tuple(_family_piece(family, n, degree, _piece_seed(seed, i)) for i, n in enumerate(sizes)))


def glued_sequence(
    base_sizes: Sequence[int],
    base_family: str = "random-regular",
    small_family: str = "path",
    degree: int = 3,
    seed: int = 0,
    small_sizes: Sequence[int] | None = None,
) -> tuple[SpaceSequence, list[tuple[int, int]]]:
    """Pieces Y_n = X_n glued to a small graph F_n by one edge.

    Returns the sequence together with ``(|X_n|, |F_n|)`` per piece; the
    base part occupies local indices ``0..|X_n|-1``.  Attach vertices are
    index 0 of each part.
    """
    if small_sizes is None:
        small_sizes = [small_size(n) for n in base_sizes]
    if len(small_sizes) != len(base_sizes):
        raise ValueError("need one small size per base size")
    ratios = [f / x for x, f in zip(base_sizes, small_sizes)]
    for i in range(1, len(base_sizes)):
        if small_sizes[i] < small_sizes[i - 1]:
            raise ValueError("small part sizes must be non-decreasing along the prefix")
        if not ratios[i] < ratios[i - 1]:
            raise ValueError("ratio |F_n|/|X_n| must be strictly decreasing along the prefix")
    pieces = []
    for i, (nx, nf) in enumerate(zip(base_sizes, small_sizes)):
        X = _family_piece(base_family, nx, degree, _piece_seed(seed, i))
        F = _family_piece(small_family, nf, degree, _piece_seed(seed, 10_000 + i))
        pieces.append(glue_example(X, F, 0, 0))
    return SpaceSequence(tuple(pieces)), list(zip(map(int, base_sizes), map(int, small_sizes)))


def bridge_metric(W: FiniteMetricSpace, Z: FiniteMetricSpace, gap: float) -> FiniteMetricSpace:
    """Explicit metric on W ⊔ Z joined through index 0 of each by a bridge of length ``gap``.

    The set distance d(W, Z) equals ``gap``.
    """
    nw, nz = W.n, Z.n
    d = np.zeros((nw + nz, nw + nz))
    d[:nw, :nw] = W.dist
    d[nw:, nw:] = Z.dist
    cross = W.dist[:, 0][:, None] + gap + Z.dist[0][None, :]
    d[:nw, nw:] = cross
    d[nw:, :nw] = cross.T
    # path metric of a weighted graph: triangle inequality holds by construction
    return FiniteMetricSpace(d, EXPLICIT, check_triangle=False)


def interleaved_counterexample(
    count: int,
    degree: int = 3,
    seed: int = 0,
    expander_sizes: Sequence[int] | None = None,
):
    """X_n = W_n ⊔ Z_n (Z_n the n-cycle, d(W_n, Z_n) = 2n) and Y interleaving the parts.

    ``Y = [Z_1, W_1, Z_2, W_2, ...]`` as separate pieces; the returned map
    is the identity on points (W_n first, then Z_n inside X_n).
    """
    from .coarse import CoarseMap

    if count < 1:
        raise ValueError("count must be positive")
    if expander_sizes is None:
        expander_sizes = [max(8, 8 * n * n) for n in range(1, count + 1)]
    W = [random_regular(m, degree, _piece_seed(seed, i)) for i, m in enumerate(expander_sizes)]
    Z = [cayley_cycle(n) for n in range(1, count + 1)]
    X = SpaceSequence(tuple(bridge_metric(W[i], Z[i], 2 * (i + 1)) for i in range(count)))
    ypieces = []
    for i in range(count):
        ypieces.extend([Z[i], W[i]])
    Y = SpaceSequence(tuple(ypieces))
    image = np.empty(X.total, dtype=np.int64)
    for i in range(count):
        nw = W[i].n
        xs = X.offsets[i]
        image[xs : xs + nw] = Y.offsets[2 * i + 1] + np.arange(nw)
        image[xs + nw : xs + nw + Z[i].n] = Y.offsets[2 * i] + np.arange(Z[i].n)
    return X, Y, CoarseMap(X, Y, image)
