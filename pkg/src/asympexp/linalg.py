"""Dense operators on l^2 of a space-sequence prefix.

Operators are plain N x N float matrices over the global points of a
:class:`SpaceSequence`.  Single-operator spectra use the Jacobi solver;
exhaustive enumerations, which need millions of tiny norms, go through
LAPACK in batches.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import _candidates as cand
from ._parallel import pmap
from ._subsets import (
    MAX_EXACT_DEFAULT,
    check_exact,
    mask_indices,
    members,
    masks_from_relation,
    popcount,
    union_table,
)
from .errors import NoAdjacency, NoSpectralGap
from .jacobi import jacobi_eigh
from .space import FiniteMetricSpace, PointSet, SpaceSequence, growth_function, point_set, r_neighborhood

SYMMETRY_TOL = 1e-12
KERNEL_TOL = 1e-9
TIE_RTOL = 1e-12
BATCH = 20_000
LOCAL_SEARCH_ITERS = 200
ALL_PREFIX_LIMIT = 32


def _as_sequence(S: SpaceSequence | FiniteMetricSpace) -> SpaceSequence:
    return S if isinstance(S, SpaceSequence) else SpaceSequence((S,))


def _is_block_diagonal(S: SpaceSequence, a: np.ndarray) -> bool:
    pi = S.piece_index
    return not np.any(a[pi[:, None] != pi[None, :]])


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """Matrix over the points of a prefix.

    The ``selfadjoint`` and ``block_diagonal`` tags are detected when left
    as ``None`` and validated when given.
    """

    space: SpaceSequence
    entries: np.ndarray
    selfadjoint: bool | None = None
    block_diagonal: bool | None = None

    def __post_init__(self) -> None:
        S = _as_sequence(self.space)
        object.__setattr__(self, "space", S)
        a = np.array(self.entries, dtype=np.float64, copy=True)
        if a.shape != (S.total, S.total):
            raise ValueError(f"operator must be {S.total}x{S.total}, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("operator entries must be finite")
        sym = bool(np.all(np.abs(a - a.T) <= SYMMETRY_TOL))
        if self.selfadjoint is None:
            object.__setattr__(self, "selfadjoint", sym)
        elif self.selfadjoint and not sym:
            raise ValueError("operator tagged selfadjoint is not symmetric within 1e-12")
        bd = _is_block_diagonal(S, a)
        if self.block_diagonal is None:
            object.__setattr__(self, "block_diagonal", bd)
        elif self.block_diagonal and not bd:
            raise ValueError("operator tagged block-diagonal has entries across pieces")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def block(self, k: int) -> np.ndarray:
        s = self.space.piece_slice(k)
        return self.entries[s, s]

    def with_entries(self, a: np.ndarray) -> "DenseOperator":
        return DenseOperator(self.space, a)

    @property
    def T(self) -> "DenseOperator":
        return self.with_entries(self.entries.T)

    def _other(self, other: "DenseOperator") -> np.ndarray:
        if other.space is not self.space and other.n != self.n:
            raise ValueError("operators live on different spaces")
        return other.entries

    def __add__(self, other: "DenseOperator") -> "DenseOperator":
        return self.with_entries(self.entries + self._other(other))

    def __sub__(self, other: "DenseOperator") -> "DenseOperator":
        return self.with_entries(self.entries - self._other(other))

    def __matmul__(self, other: "DenseOperator") -> "DenseOperator":
        return self.with_entries(self.entries @ self._other(other))

    def __mul__(self, scalar: float) -> "DenseOperator":
        return self.with_entries(self.entries * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    basis: np.ndarray | None = None

    def residual(self, t: np.ndarray) -> float:
        """Relative reconstruction error ``||T - Q L Q^T||_F / ||T||_F``."""
        if self.basis is None:
            raise ValueError("spectrum was computed without eigenvectors")
        q = self.basis
        rec = (q * self.eigenvalues[None, :]) @ q.T
        scale = np.linalg.norm(t)
        return float(np.linalg.norm(t - rec) / scale) if scale else float(np.linalg.norm(rec))


# ---------------------------------------------------------------- constructors


def averaging_projection(S: SpaceSequence | FiniteMetricSpace, support: Iterable[int] | None = None) -> DenseOperator:
    """Block-diagonal projection averaging over each piece.

    With ``support`` (global points), block ``k`` averages over the part of
    the support inside piece ``k`` instead, giving P_F for a subset F.
    """
    S = _as_sequence(S)
    a = np.zeros((S.total, S.total))
    inside = np.ones(S.total, dtype=bool)
    if support is not None:
        inside[:] = False
        inside[point_set(support, S.total)] = True
    for k in range(len(S)):
        idx = np.flatnonzero(inside[S.piece_slice(k)]) + S.offsets[k]
        if idx.size:
            a[np.ix_(idx, idx)] = 1.0 / idx.size
    return DenseOperator(S, a, selfadjoint=True, block_diagonal=True)


def discrete_laplacian(S: SpaceSequence | FiniteMetricSpace) -> DenseOperator:
    S = _as_sequence(S)
    a = np.zeros((S.total, S.total))
    for k, p in enumerate(S.pieces):
        if not p.is_graph:
            raise NoAdjacency(f"piece {k} is not a graph piece; the Laplacian needs an edge list")
        off = int(S.offsets[k])
        for u, v in p.edges:
            a[off + u, off + v] = a[off + v, off + u] = -1.0
            a[off + u, off + u] += 1.0
            a[off + v, off + v] += 1.0
    return DenseOperator(S, a, selfadjoint=True, block_diagonal=True)


def multiplication_operator(S: SpaceSequence | FiniteMetricSpace, f: Sequence[float]) -> DenseOperator:
    S = _as_sequence(S)
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (S.total,):
        raise ValueError(f"need one value per point ({S.total}), got shape {f.shape}")
    return DenseOperator(S, np.diag(f), selfadjoint=True, block_diagonal=True)


def _pairing_arrays(pairing, N: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairing, dict):
        items = sorted(pairing.items())
    else:
        items = [tuple(p) for p in pairing]
    dom = np.array([int(x) for x, _ in items], dtype=np.int64)
    ran = np.array([int(y) for _, y in items], dtype=np.int64)
    if dom.size:
        if dom.min() < 0 or ran.min() < 0 or dom.max() >= N or ran.max() >= N:
            raise ValueError("pairing index out of range")
        if np.unique(dom).size != dom.size:
            raise ValueError("pairing lists a domain point twice")
        if np.unique(ran).size != ran.size:
            raise ValueError("pairing is not injective")
    return dom, ran


def partial_translation(S: SpaceSequence | FiniteMetricSpace, pairing) -> DenseOperator:
    """V with ``V[x, theta(x)] = 1`` for x in the domain; ``pairing`` is a dict or (x, theta(x)) pairs."""
    S = _as_sequence(S)
    dom, ran = _pairing_arrays(pairing, S.total)
    a = np.zeros((S.total, S.total))
    a[dom, ran] = 1.0
    return DenseOperator(S, a)


# ---------------------------------------------------------------- norms


def _strip(m: np.ndarray) -> np.ndarray:
    rows = np.flatnonzero(np.any(m != 0, axis=1))
    cols = np.flatnonzero(np.any(m != 0, axis=0))
    return m[np.ix_(rows, cols)]


def matrix_norm(m: np.ndarray) -> float:
    """Largest singular value of a plain matrix, via Jacobi on the smaller Gram matrix."""
    m = _strip(np.asarray(m, dtype=np.float64))
    if m.size == 0:
        return 0.0
    g = m @ m.T if m.shape[0] <= m.shape[1] else m.T @ m
    w, _ = jacobi_eigh(g, vectors=False)
    return float(np.sqrt(max(w[-1], 0.0)))


def operator_norm(T: DenseOperator | np.ndarray, threads: int | None = None) -> float:
    if isinstance(T, DenseOperator):
        if T.block_diagonal:
            return max(pmap(lambda k: matrix_norm(T.block(k)), range(len(T.space)), threads))
        T = T.entries
    return matrix_norm(T)


def batched_norms(m: np.ndarray) -> np.ndarray:
    """Spectral norms of a stack of equally shaped matrices (LAPACK)."""
    m = np.asarray(m, dtype=np.float64)
    if m.shape[-1] == 0 or m.shape[-2] == 0:
        return np.zeros(m.shape[:-2])
    if m.shape[-2] <= m.shape[-1]:
        g = m @ np.swapaxes(m, -1, -2)
    else:
        g = np.swapaxes(m, -1, -2) @ m
    w = np.linalg.eigvalsh(g)[..., -1]
    return np.sqrt(np.maximum(w, 0.0))


def frobenius_norm(T: DenseOperator | np.ndarray) -> float:
    a = T.entries if isinstance(T, DenseOperator) else np.asarray(T, dtype=np.float64)
    return float(np.sqrt(np.sum(a * a)))


def compression(T: DenseOperator, A: Iterable[int], B: Iterable[int]) -> DenseOperator:
    """chi_A T chi_B over global point sets."""
    A = point_set(A, T.n)
    B = point_set(B, T.n)
    a = np.zeros_like(T.entries)
    a[np.ix_(A, B)] = T.entries[np.ix_(A, B)]
    return T.with_entries(a)


# ---------------------------------------------------------------- propagation


@dataclass(frozen=True)
class PropagationRow:
    R: float
    eps: float
    mode: str
    witness_a: tuple[int, ...]
    witness_b: tuple[int, ...]


@dataclass
class PropagationProfile:
    rows: list[PropagationRow] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["R", "eps", "mode", "witnessA", "witnessB"])
        for r in self.rows:
            w.writerow([format(r.R, ".17g"), format(r.eps, ".17g"), r.mode,
                        " ".join(map(str, r.witness_a)), " ".join(map(str, r.witness_b))])
        return buf.getvalue()


def _far_tables(dist: np.ndarray, R: float) -> tuple[np.ndarray, int]:
    """``far[A]`` = mask of points at distance >= R from A, for every mask A."""
    n = dist.shape[0]
    full = (1 << n) - 1
    near = union_table(masks_from_relation(dist < R))
    return full & ~near, full


def _exact_piece_propagation(block: np.ndarray, dist: np.ndarray, R: float) -> tuple[float, int, int]:
    """Max ||chi_A T chi_B|| over closed pairs, with the smallest-mask witness.

    For fixed A the best B is the maximal far set; among A it suffices to
    take A = far(far(A)), which only grows A.
    """
    n = dist.shape[0]
    far, _ = _far_tables(dist, R)
    masks = np.arange(1 << n, dtype=np.int64)
    b = far
    closed = (masks != 0) & (b != 0) & (far[b] == masks)
    cand_masks = masks[closed]
    if cand_masks.size == 0:
        return 0.0, 0, 0
    cand_b = b[cand_masks]
    na, nb = popcount(cand_masks), popcount(cand_b)
    vals = np.empty(cand_masks.size)
    for sa in np.unique(na):
        for sb in np.unique(nb[na == sa]):
            sel = np.flatnonzero((na == sa) & (nb == sb))
            for s in range(0, sel.size, BATCH):
                part = sel[s : s + BATCH]
                ia = mask_indices(cand_masks[part], n, int(sa))
                ib = mask_indices(cand_b[part], n, int(sb))
                vals[part] = batched_norms(block[ia[:, :, None], ib[:, None, :]])
    best = float(vals.max())
    tied = vals >= best - TIE_RTOL * best
    i = int(np.flatnonzero(tied)[np.argmin(cand_masks[tied])])
    return best, int(cand_masks[i]), int(cand_b[i])


def _single_norm(block: np.ndarray, A: np.ndarray, B: np.ndarray) -> float:
    if A.size == 0 or B.size == 0:
        return 0.0
    return float(batched_norms(block[np.ix_(A, B)][None])[0])


def _heuristic_piece_propagation(block: np.ndarray, dist: np.ndarray, R: float) -> tuple[float, np.ndarray, np.ndarray]:
    n = dist.shape[0]
    near = dist < R
    rank = cand.bfs_ranks(dist)
    best, best_a = -1.0, np.zeros(0, dtype=np.int64)

    def far_of(A: np.ndarray) -> np.ndarray:
        if A.size == 0:
            return np.arange(n)
        return np.flatnonzero(~near[A].any(axis=0))

    seen: set[bytes] = set()
    for x0 in range(n):
        lengths = np.arange(1, n + 1) if n <= ALL_PREFIX_LIMIT else cand.level_lengths(dist, x0)
        for L in lengths:
            for A in (cand.prefix_set(rank, x0, int(L)), cand.suffix_set(rank, x0, int(L))):
                key = A.tobytes()
                if A.size == 0 or key in seen:
                    continue
                seen.add(key)
                v = _single_norm(block, A, far_of(A))
                if v > best:
                    best, best_a = v, A
    if best < 0:
        return 0.0, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    # greedy single-point flips, first improvement
    cur = np.zeros(n, dtype=bool)
    cur[best_a] = True
    for _ in range(LOCAL_SEARCH_ITERS):
        improved = False
        for x in range(n):
            cur[x] = ~cur[x]
            A = np.flatnonzero(cur)
            v = _single_norm(block, A, far_of(A))
            if v > best * (1 + TIE_RTOL):
                best, improved = v, True
                break
            cur[x] = ~cur[x]
        if not improved:
            break
    A = np.flatnonzero(cur)
    return best, A, far_of(A)


def _mask_points(mask: int) -> np.ndarray:
    return np.asarray(members(mask), dtype=np.int64)


def piece_propagation(
    T: DenseOperator,
    k: int,
    R_list: Sequence[float],
    mode: str = "exact",
    max_exact: int = MAX_EXACT_DEFAULT,
) -> list[PropagationRow]:
    """Propagation rows of block ``k`` of a block-diagonal operator; witnesses are global."""
    if not T.block_diagonal:
        raise ValueError("per-piece propagation needs a block-diagonal operator")
    piece = T.space.pieces[k]
    off = int(T.space.offsets[k])
    return _propagation_rows(T.block(k), piece.dist, R_list, mode, max_exact, off)


def _propagation_rows(block, dist, R_list, mode, max_exact, off) -> list[PropagationRow]:
    if mode not in ("exact", "heuristic"):
        raise ValueError(f"mode must be 'exact' or 'heuristic', got {mode!r}")
    if mode == "exact":
        check_exact(dist.shape[0], max_exact)
    raw = []
    for R in R_list:
        if mode == "exact":
            v, ma, mb = _exact_piece_propagation(block, dist, float(R))
            A, B = _mask_points(ma), _mask_points(mb)
        else:
            v, A, B = _heuristic_piece_propagation(block, dist, float(R))
        raw.append((float(R), v, A, B))
    if mode == "heuristic":
        # a pair admissible at R' is admissible at every R <= R'
        order = sorted(range(len(raw)), key=lambda i: -raw[i][0])
        carry = None
        for i in order:
            if carry is not None and carry[1] > raw[i][1]:
                raw[i] = (raw[i][0],) + carry[1:]
            carry = raw[i]
    return [PropagationRow(R, v, mode, tuple(int(a) + off for a in A), tuple(int(b) + off for b in B)) for R, v, A, B in raw]


def propagation_profile(
    T: DenseOperator,
    R_list: Sequence[float],
    mode: str = "exact",
    max_exact: int = MAX_EXACT_DEFAULT,
    threads: int | None = None,
) -> PropagationProfile:
    """eps(R) = max ||chi_A T chi_B|| over d(A, B) >= R.

    Block-diagonal operators are handled piece by piece (the norm of a
    direct sum is the max over blocks); otherwise the whole prefix is one
    enumeration under the union metric.
    """
    S = T.space
    if T.block_diagonal:
        per_piece = pmap(lambda k: piece_propagation(T, k, R_list, mode, max_exact), range(len(S)), threads)
        rows = []
        for i in range(len(R_list)):
            best = per_piece[0][i]
            for pr in per_piece[1:]:
                if pr[i].eps > best.eps * (1 + TIE_RTOL):
                    best = pr[i]
            rows.append(best)
        return PropagationProfile(rows)
    return PropagationProfile(_propagation_rows(T.entries, S.union_dist(), R_list, mode, max_exact, 0))


# ---------------------------------------------------------------- spectra


def spectrum(T: DenseOperator, vectors: bool = True, threads: int | None = None) -> Spectrum:
    """Eigen-decomposition of a self-adjoint operator, block by block when possible."""
    if not T.selfadjoint:
        raise ValueError("spectrum needs a self-adjoint operator")
    S = T.space
    if not T.block_diagonal:
        w, v = jacobi_eigh(T.entries, vectors=vectors)
        return Spectrum(w, v)
    parts = pmap(lambda k: jacobi_eigh(T.block(k), vectors=vectors), range(len(S)), threads)
    w = np.concatenate([p[0] for p in parts])
    order = np.argsort(w, kind="stable")
    if not vectors:
        return Spectrum(w[order])
    q = np.zeros((T.n, T.n))
    for k, (_, v) in enumerate(parts):
        s = S.piece_slice(k)
        q[s, s] = v
    return Spectrum(w[order], q[:, order])


def spectral_gap(T: DenseOperator, kernel_tol: float = KERNEL_TOL, threads: int | None = None) -> tuple[float, int]:
    w = spectrum(T, vectors=False, threads=threads).eigenvalues
    kdim = int(np.sum(np.abs(w) <= kernel_tol))
    above = w[w > kernel_tol]
    if above.size == 0:
        raise NoSpectralGap("no eigenvalue above the kernel tolerance")
    return float(above.min()), kdim


def kernel_projection(T: DenseOperator, kernel_tol: float = KERNEL_TOL, threads: int | None = None) -> DenseOperator:
    sp = spectrum(T, vectors=True, threads=threads)
    q = sp.basis[:, np.abs(sp.eigenvalues) <= kernel_tol]
    return T.with_entries(q @ q.T)


def _graph_pieces(S: SpaceSequence) -> None:
    for k, p in enumerate(S.pieces):
        if not p.is_graph:
            raise NoAdjacency(f"piece {k} is not a graph piece")


def poincare_constant(S: SpaceSequence | FiniteMetricSpace, threads: int | None = None) -> list[float]:
    """Per piece, 2 * lambda_2 of its Laplacian (ordered-pair edge sums); +inf for one point."""
    S = _as_sequence(S)
    _graph_pieces(S)
    lap = discrete_laplacian(S)

    def one(k: int) -> float:
        if S.pieces[k].n == 1:
            return float("inf")
        w, _ = jacobi_eigh(lap.block(k), vectors=False)
        return 2.0 * float(w[1])

    return pmap(one, range(len(S)), threads)


def poincare_slack(piece: FiniteMetricSpace, f: np.ndarray, c: float) -> float:
    """sum over ordered adjacent pairs of |f(x)-f(y)|^2 minus c * sum |f|^2.

    Evaluated from the edge list directly, independent of the Laplacian.
    """
    if not piece.is_graph:
        raise NoAdjacency("Poincare inequality needs a graph piece")
    f = np.asarray(f, dtype=np.float64)
    if not piece.edges:
        return float(-c * np.sum(f * f)) if np.isfinite(c) else 0.0
    e = np.asarray(piece.edges)
    lhs = 2.0 * np.sum((f[e[:, 0]] - f[e[:, 1]]) ** 2)
    return float(lhs - c * np.sum(f * f))


# ---------------------------------------------------------------- ghosts and normalisers


def ghost_profile(T: DenseOperator, balls: Sequence[Iterable[int]] | None = None) -> list[tuple[int, float]]:
    """Rows ``(k, sup |T_xy| over x, y outside B_k)``.

    Default ``B_k`` is the union of the first ``k`` pieces, k = 0..m-1.
    """
    S = T.space
    if balls is None:
        balls = [np.arange(int(S.offsets[k])) for k in range(len(S))]
    a = np.abs(T.entries)
    rows = []
    for k, B in enumerate(balls):
        out = np.ones(T.n, dtype=bool)
        out[point_set(B, T.n)] = False
        idx = np.flatnonzero(out)
        rows.append((k, float(a[np.ix_(idx, idx)].max()) if idx.size else 0.0))
    return rows


def ghost_product_bound(G: DenseOperator, T: DenseOperator, B: Iterable[int], R: float, eps: float) -> dict:
    """Check |(GT)_xy| <= 2 eps for x, y outside N_R(B).

    Hypotheses, verified first: ||G||, ||T|| <= 1; |G_xy| < eps / N(R) for
    x, y outside B; every column tail of T beyond distance R has l2 mass
    below eps.
    """
    S = G.space
    X = S.as_space()
    n = G.n
    B = point_set(B, n)
    N = growth_function(S, R)
    eps_small = eps / N
    ng, nt = operator_norm(G), operator_norm(T)
    if ng > 1 + 1e-12 or nt > 1 + 1e-12:
        raise ValueError(f"need norms <= 1, got {ng}, {nt}")
    outside = np.ones(n, dtype=bool)
    outside[B] = False
    o = np.flatnonzero(outside)
    if o.size and np.abs(G.entries[np.ix_(o, o)]).max() >= eps_small:
        raise ValueError("G is not eps/N(R)-small outside B")
    d = X.dist
    tails = np.sqrt(np.sum(np.where(d > R, T.entries**2, 0.0), axis=0))
    if tails.max() >= eps:
        raise ValueError("T has a column tail of mass >= eps beyond R")
    Bp = r_neighborhood(X, B, R)
    out2 = np.ones(n, dtype=bool)
    out2[Bp] = False
    o2 = np.flatnonzero(out2)
    gt = G.entries @ T.entries
    lhs = float(np.abs(gt[np.ix_(o2, o2)]).max()) if o2.size else 0.0
    rhs = 2.0 * eps
    return {"lhs": lhs, "rhs": rhs, "slack": rhs - lhs, "ok": lhs <= rhs}


@dataclass(frozen=True)
class DecayRow:
    eps: float
    K: float
    quasi_local_at_scale: bool


def normalizer_decay_check(
    S: SpaceSequence | FiniteMetricSpace,
    f: Sequence[float],
    pairing,
    eps_list: Sequence[float],
    scale: float | None = None,
) -> list[DecayRow]:
    """Smallest K with |f(x)| < eps whenever d(x, theta(x)) > K, for each eps.

    K is the largest displacement among domain points with |f(x)| >= eps,
    or 0 when there are none.  With ``scale`` given, rows whose K exceeds
    it are flagged as not quasi-local at that scale.
    """
    S = _as_sequence(S)
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (S.total,):
        raise ValueError(f"need one value per point ({S.total}), got shape {f.shape}")
    dom, ran = _pairing_arrays(pairing, S.total)
    disp = np.array([S.union_metric(int(x), int(y)) for x, y in zip(dom, ran)])
    rows = []
    for eps in eps_list:
        big = np.abs(f[dom]) >= eps if dom.size else np.zeros(0, dtype=bool)
        K = float(disp[big].max()) if np.any(big) else 0.0
        rows.append(DecayRow(float(eps), K, scale is None or K <= scale))
    return rows
