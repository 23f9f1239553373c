"""Boundary-expansion profiles, Cheeger constants and separated-set products.

Exact modes enumerate every subset of a piece as a bitmask.  Heuristic
modes sweep BFS-ordered prefixes (and their complements) from every base
point and polish the best one by size-preserving swaps; their values are
upper bounds for expansion ratios and lower bounds for products.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import _candidates as cand
from ._parallel import pmap
from ._subsets import (
    MAX_EXACT_DEFAULT,
    as_fraction,
    ceil_fraction_times,
    check_exact,
    masks_from_relation,
    members,
    popcount,
    union_table,
)
from .errors import EmptyAdmissibleFamily
from .jacobi import jacobi_eigh
from .linalg import TIE_RTOL, averaging_projection, piece_propagation
from .space import FiniteMetricSpace, SpaceSequence, point_set, r_neighborhood

MODES = ("exact", "heuristic")
SWAP_ITERS = 200
AUDIT_TOL = 1e-9
WINDOW_RULE = "ceil(alpha*|X|) <= |A| <= floor(|X|/2), |A| >= 1"


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _as_sequence(S) -> SpaceSequence:
    return S if isinstance(S, SpaceSequence) else SpaceSequence((S,))


def admissible_window(n: int, alpha) -> tuple[int, int]:
    """Integer size window for density floor ``alpha``; raises when empty."""
    a = as_fraction(alpha)
    lo = max(1, ceil_fraction_times(a, n))
    hi = n // 2
    if lo > hi:
        raise EmptyAdmissibleFamily(f"no admissible sets: ceil({a}*{n})={lo} > floor({n}/2)={hi}")
    return lo, hi


# ---------------------------------------------------------------- exact tables


def _boundary_table(dist: np.ndarray, R: float) -> tuple[np.ndarray, np.ndarray]:
    """Sizes and outer R-boundary sizes of every subset mask."""
    n = dist.shape[0]
    masks = np.arange(1 << n, dtype=np.int64)
    nbhd = union_table(masks_from_relation(dist <= R))
    return popcount(masks), popcount(nbhd & ~masks)


def _exact_window_min(sizes, bnd, lo, hi) -> tuple[int, int, int]:
    """(boundary, size, mask) of the minimal ratio in the window, smallest mask on ties."""
    sel = np.flatnonzero((sizes >= lo) & (sizes <= hi))
    ratio = bnd[sel] / sizes[sel]
    i = sel[int(np.argmin(ratio))]
    b, s = int(bnd[i]), int(sizes[i])
    tied = sel[bnd[sel] * s == b * sizes[sel]]
    m = int(tied.min())
    return b, s, m


# ---------------------------------------------------------------- heuristic search


def _boundary_size(near: np.ndarray, A: np.ndarray) -> int:
    return int(near[:, A].any(axis=1).sum()) - int(A.size)


def _two_swap(near: np.ndarray, A: np.ndarray, iters: int = SWAP_ITERS) -> tuple[int, np.ndarray]:
    """Best-improvement swaps (one point out, one in) keeping |A| fixed."""
    n = near.shape[0]
    inside = np.zeros(n, dtype=bool)
    inside[A] = True
    nr = near.astype(np.int32)
    cnt = nr[:, inside].sum(axis=1)
    cur = int((cnt > 0).sum())
    for _ in range(iters):
        ins, outs = np.flatnonzero(inside), np.flatnonzero(~inside)
        if ins.size == 0 or outs.size == 0:
            break
        best = (cur, -1, -1)
        for a in ins:
            base = cnt - nr[:, a]
            sizes = ((base[:, None] + nr[:, outs]) > 0).sum(axis=0)
            j = int(np.argmin(sizes))
            if sizes[j] < best[0]:
                best = (int(sizes[j]), int(a), int(outs[j]))
        if best[1] < 0:
            break
        cur, a, b = best
        cnt += nr[:, b] - nr[:, a]
        inside[a], inside[b] = False, True
    A = np.flatnonzero(inside)
    return cur - int(A.size), A


def _sweep_min_ratio(dist: np.ndarray, R: float, lo: int, hi: int) -> tuple[int, int, np.ndarray]:
    """Best BFS prefix or suffix with size in [lo, hi]: (boundary, size, set)."""
    n = dist.shape[0]
    near = dist <= R
    rank = cand.bfs_ranks(dist)
    cover, full = cand.cover_and_full_times(rank, near)
    Ls = np.arange(lo, hi + 1)
    pre_b = cand.prefix_neighborhood_sizes(cover, Ls) - Ls[None, :]
    suf_b = cand.suffix_neighborhood_sizes(full, n - Ls) - Ls[None, :]
    ratios = np.stack([pre_b / Ls[None, :], suf_b / Ls[None, :]], axis=1)  # (x0, kind, L)
    x0, kind, li = np.unravel_index(int(np.argmin(ratios)), ratios.shape)
    L = int(Ls[li])
    if kind == 0:
        A, b = cand.prefix_set(rank, int(x0), L), int(pre_b[x0, li])
    else:
        A, b = cand.suffix_set(rank, int(x0), n - L), int(suf_b[x0, li])
    return b, L, A


def _better(b1: int, s1: int, b2: int, s2: int) -> bool:
    """Strictly smaller ratio b1/s1 < b2/s2."""
    return b1 * s2 < b2 * s1


def _heuristic_window_min(dist, R, lo, hi, extra: Iterable[np.ndarray] = ()) -> tuple[int, int, np.ndarray]:
    near = dist <= R
    b, s, A = _sweep_min_ratio(dist, R, lo, hi)
    for E in extra:
        if lo <= E.size <= hi:
            be = _boundary_size(near, E)
            if _better(be, E.size, b, s):
                b, s, A = be, int(E.size), E
    b2, A2 = _two_swap(near, A)
    if _better(b2, s, b, s):
        b, A = b2, A2
    return b, s, np.sort(A)


# ---------------------------------------------------------------- Cheeger


def _components(adj: np.ndarray) -> list[np.ndarray]:
    ncomp, labels = connected_components(csr_matrix(adj), directed=False)
    return [np.flatnonzero(labels == c) for c in range(ncomp)]


def cheeger_constant(
    X: FiniteMetricSpace, mode: str = "exact", max_exact: int = MAX_EXACT_DEFAULT
) -> tuple[float, np.ndarray]:
    """min |d_1 A| / |A| over 1 <= |A| <= |X|/2 with a witness.

    Heuristic mode sorts points by the Fiedler vector of the Laplacian of
    the 1-neighbourhood graph, scans all prefix cuts, adds connected
    components as candidates and polishes by swaps; it is an upper bound.
    A one-point piece has no admissible set and gets +inf.
    """
    _check_mode(mode)
    n = X.n
    if n < 2:
        return math.inf, np.zeros(0, dtype=np.int64)
    hi = n // 2
    if mode == "exact":
        check_exact(n, max_exact)
        sizes, bnd = _boundary_table(X.dist, 1)
        b, s, m = _exact_window_min(sizes, bnd, 1, hi)
        return b / s, np.asarray(members(m), dtype=np.int64)
    adj = X.adjacency
    near = X.dist <= 1
    lap = np.diag(adj.sum(axis=1).astype(float)) - adj.astype(float)
    _, vecs = jacobi_eigh(lap)
    order = np.argsort(vecs[:, 1], kind="stable")
    best = None
    for seq in (order, order[::-1]):
        for L in range(1, hi + 1):
            A = np.sort(seq[:L])
            bA = _boundary_size(near, A)
            if best is None or _better(bA, L, best[0], best[1]):
                best = (bA, L, A)
    for comp in _components(adj):
        if comp.size <= hi:
            bA = _boundary_size(near, comp)
            if _better(bA, comp.size, best[0], best[1]):
                best = (bA, int(comp.size), comp)
    b, s, A = best
    b2, A2 = _two_swap(near, A)
    if _better(b2, s, b, s):
        b, A = b2, np.sort(A2)
    return b / s, A


# ---------------------------------------------------------------- expansion profile


@dataclass(frozen=True)
class ExpansionRow:
    piece: int
    alpha: float
    R: float
    min_ratio: float
    witness: tuple[int, ...]
    mode: str
    boundary: int = 0
    size: int = 0

    @property
    def vacuous(self) -> bool:
        return self.size == 0

    @property
    def ratio(self) -> Fraction | None:
        return None if self.vacuous else Fraction(self.boundary, self.size)


@dataclass
class ExpansionReport:
    rows: list[ExpansionRow] = field(default_factory=list)
    window_rule: str = WINDOW_RULE

    def row(self, piece: int, alpha, R) -> ExpansionRow:
        for r in self.rows:
            if r.piece == piece and r.alpha == float(alpha) and r.R == float(R):
                return r
        raise KeyError((piece, alpha, R))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["piece", "alpha", "R", "minRatio", "witness", "mode"])
        for r in self.rows:
            w.writerow([r.piece, format(r.alpha, ".17g"), format(r.R, ".17g"),
                        "inf" if r.vacuous else format(r.min_ratio, ".17g"),
                        " ".join(map(str, r.witness)), r.mode])
        return buf.getvalue()


def _piece_expansion(piece: FiniteMetricSpace, k: int, alphas, R_list, mode: str, max_exact: int) -> list[ExpansionRow]:
    n = piece.n
    windows = {}
    for a in alphas:
        try:
            windows[a] = admissible_window(n, a)
        except EmptyAdmissibleFamily:
            windows[a] = None
    found: dict[tuple, tuple[int, int, np.ndarray]] = {}
    if mode == "exact":
        check_exact(n, max_exact)
        for R in R_list:
            sizes, bnd = _boundary_table(piece.dist, R)
            for a in alphas:
                if windows[a] is not None:
                    b, s, m = _exact_window_min(sizes, bnd, *windows[a])
                    found[(a, R)] = (b, s, np.asarray(members(m), dtype=np.int64))
    else:
        for R in R_list:
            for a in alphas:
                if windows[a] is not None:
                    found[(a, R)] = _heuristic_window_min(piece.dist, R, *windows[a])
        # every witness is re-scored under every (alpha, R) it is admissible for, which
        # keeps the upper bounds monotone in both parameters
        pool = [v[2] for v in found.values()]
        for (a, R), (b, s, A) in list(found.items()):
            lo, hi = windows[a]
            near = piece.dist <= R
            for E in pool:
                if lo <= E.size <= hi:
                    be = _boundary_size(near, E)
                    if _better(be, E.size, b, s):
                        b, s, A = be, int(E.size), E
            found[(a, R)] = (b, s, A)
    rows = []
    for a in alphas:
        for R in R_list:
            if windows[a] is None:
                rows.append(ExpansionRow(k, float(a), float(R), math.inf, (), mode))
            else:
                b, s, A = found[(a, R)]
                rows.append(ExpansionRow(k, float(a), float(R), b / s, tuple(int(x) for x in A), mode, b, s))
    return rows


def expansion_profile(
    S: SpaceSequence | FiniteMetricSpace,
    alphas: Sequence,
    R_list: Sequence[float],
    mode: str = "exact",
    max_exact: int = MAX_EXACT_DEFAULT,
    threads: int | None = None,
) -> ExpansionReport:
    """Per piece and (alpha, R): min |d_R A|/|A| over the admissible window.

    Witnesses are piece-local indices.  Empty windows give vacuous rows with
    ratio +inf.
    """
    _check_mode(mode)
    S = _as_sequence(S)
    if mode == "exact":
        for p in S.pieces:
            check_exact(p.n, max_exact)
    parts = pmap(lambda k: _piece_expansion(S.pieces[k], k, list(alphas), list(R_list), mode, max_exact), range(len(S)), threads)
    return ExpansionReport([r for part in parts for r in part])


@dataclass(frozen=True)
class Certificate:
    verdict: str
    prefix_length: int
    parameters: dict
    piece: int | None = None
    witness: tuple[int, ...] | None = None
    boundary: int | None = None
    size: int | None = None

    def to_json(self) -> dict:
        out = {"verdict": self.verdict, "prefixLength": self.prefix_length, "parameters": self.parameters}
        if self.witness is not None:
            out["witness"] = {"piece": self.piece, "A": list(self.witness), "boundary": self.boundary, "size": self.size}
        return out


def asymptotic_certificate(
    S: SpaceSequence | FiniteMetricSpace,
    alpha,
    c,
    R: float,
    mode: str = "exact",
    max_exact: int = MAX_EXACT_DEFAULT,
) -> Certificate:
    """Check |d_R A| > c|A| on every piece and admissible A of the prefix.

    Refuted carries the first failing piece and its minimising set (ties
    count as failures).  HoldsOnPrefix speaks about the prefix only.  The
    heuristic mode can refute but never certifies, so it answers
    Inconclusive when no failure is found.
    """
    _check_mode(mode)
    S = _as_sequence(S)
    return certificate_from_report(expansion_profile(S, [alpha], [R], mode, max_exact), len(S), alpha, c, R, mode)


def certificate_from_report(rep: ExpansionReport, prefix_length: int, alpha, c, R: float, mode: str) -> Certificate:
    """Verdict for one (alpha, R) read off an already computed profile."""
    cf = as_fraction(c)
    params = {"alpha": float(alpha), "c": float(c), "R": float(R), "mode": mode, "window": WINDOW_RULE}
    for row in rep.rows:
        if row.alpha != float(alpha) or row.R != float(R) or row.vacuous:
            continue
        if row.boundary * cf.denominator <= cf.numerator * row.size:
            return Certificate("Refuted", prefix_length, params, row.piece, row.witness, row.boundary, row.size)
    return Certificate("HoldsOnPrefix" if mode == "exact" else "Inconclusive", prefix_length, params)


# ---------------------------------------------------------------- separation


@dataclass(frozen=True)
class SeparationRow:
    piece: int
    R: float
    max_product: int
    normalized: float
    witness_a: tuple[int, ...]
    witness_b: tuple[int, ...]
    mode: str


@dataclass
class SeparationReport:
    rows: list[SeparationRow] = field(default_factory=list)

    def sequence_sup(self) -> list[tuple[float, float, int]]:
        """Per R: (R, sup of normalized products over pieces, attaining piece)."""
        out: dict[float, tuple[float, int]] = {}
        for r in self.rows:
            if r.R not in out or r.normalized > out[r.R][0]:
                out[r.R] = (r.normalized, r.piece)
        return [(R, v, k) for R, (v, k) in out.items()]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["piece", "R", "maxProduct", "normalized", "witnessA", "witnessB", "mode"])
        for r in self.rows:
            w.writerow([r.piece, format(r.R, ".17g"), r.max_product, format(r.normalized, ".17g"),
                        " ".join(map(str, r.witness_a)), " ".join(map(str, r.witness_b)), r.mode])
        return buf.getvalue()


def _exact_separation(dist: np.ndarray, R: float) -> tuple[int, np.ndarray, np.ndarray]:
    n = dist.shape[0]
    full = (1 << n) - 1
    masks = np.arange(1 << n, dtype=np.int64)
    far = full & ~union_table(masks_from_relation(dist < R))
    prod = popcount(masks) * popcount(far)
    best = int(prod.max())
    if best == 0:
        return 0, np.zeros(0, np.int64), np.zeros(0, np.int64)
    m = int(np.flatnonzero(prod == best)[0])
    return best, np.asarray(members(m), np.int64), np.asarray(members(int(far[m])), np.int64)


def _heuristic_separation(dist: np.ndarray, R: float) -> tuple[int, np.ndarray, np.ndarray]:
    n = dist.shape[0]
    near = dist < R
    rank = cand.bfs_ranks(dist)
    cover, full = cand.cover_and_full_times(rank, near)
    Ls = np.arange(1, n + 1)
    pre = Ls[None, :] * (n - cand.prefix_neighborhood_sizes(cover, Ls))
    starts = np.arange(0, n)
    suf = (n - starts)[None, :] * (n - cand.suffix_neighborhood_sizes(full, starts))
    prods = np.stack([pre, suf], axis=1)
    x0, kind, li = np.unravel_index(int(np.argmax(prods)), prods.shape)
    if prods[x0, kind, li] == 0:
        return 0, np.zeros(0, np.int64), np.zeros(0, np.int64)
    A = cand.prefix_set(rank, int(x0), int(Ls[li])) if kind == 0 else cand.suffix_set(rank, int(x0), int(starts[li]))

    def far_of(P: np.ndarray) -> np.ndarray:
        return np.flatnonzero(~near[P].any(axis=0))

    B = far_of(A)
    A = far_of(B)  # closing A can only grow it
    B = far_of(A)
    return int(A.size * B.size), A, B


def _piece_separation(piece: FiniteMetricSpace, k: int, R_list, mode: str, max_exact: int) -> list[SeparationRow]:
    n = piece.n
    rows, raw = [], []
    for R in R_list:
        if not R > 0:
            raise ValueError(f"separation radii must be positive, got {R}")
        if mode == "exact":
            raw.append((float(R),) + _exact_separation(piece.dist, R))
        else:
            raw.append((float(R),) + _heuristic_separation(piece.dist, R))
    if mode == "heuristic":
        # a pair separated at R' is separated at every R <= R'
        order = sorted(range(len(raw)), key=lambda i: -raw[i][0])
        carry = None
        for i in order:
            if carry is not None and carry[1] > raw[i][1]:
                raw[i] = (raw[i][0],) + carry[1:]
            carry = raw[i]
    for R, p, A, B in raw:
        rows.append(SeparationRow(k, R, p, p / (n * n), tuple(map(int, A)), tuple(map(int, B)), mode))
    return rows


def separated_product(
    S: SpaceSequence | FiniteMetricSpace,
    R_list: Sequence[float],
    mode: str = "exact",
    max_exact: int = MAX_EXACT_DEFAULT,
    threads: int | None = None,
) -> SeparationReport:
    """Per piece and R: max |A||B| over nonempty A, B with d(A, B) >= R (piece-local witnesses)."""
    _check_mode(mode)
    S = _as_sequence(S)
    if mode == "exact":
        for p in S.pieces:
            check_exact(p.n, max_exact)
    parts = pmap(lambda k: _piece_separation(S.pieces[k], k, list(R_list), mode, max_exact), range(len(S)), threads)
    return SeparationReport([r for part in parts for r in part])


# ---------------------------------------------------------------- growth chain


@dataclass(frozen=True)
class GrowthStep:
    i: int
    size: int
    next_size: int
    in_window: bool
    expands: bool
    grows: bool


@dataclass
class GrowthTrace:
    ok: bool
    failed_step: int | None
    steps: list[GrowthStep]
    sizes: list[int]


def growth_lemma_check(X: FiniteMetricSpace, A: Iterable[int], c, R0: float, k: int, alpha=0) -> GrowthTrace:
    """Iterate N_i = N_{i R0}(A) and test |N_{i+1}| >= (1 + c)|N_i|.

    A step is tested while alpha|X| <= |N_i| <= |X|/2; the chain stops at
    the first set past half size.  ``expands`` records whether the set
    itself satisfied |d_R0 N_i| > c|N_i|; whenever it does the growth
    step must hold, since N_{R0}(N_i) is inside N_{i+1}.
    """
    cf, af = as_fraction(c), as_fraction(alpha)
    n = X.n
    cur = point_set(A, n)
    sizes = [int(cur.size)]
    steps: list[GrowthStep] = []
    failed = None
    for i in range(k):
        s = int(cur.size)
        if 2 * s > n:
            break
        nxt = r_neighborhood(X, A, (i + 1) * R0)
        t = int(nxt.size)
        in_window = s >= 1 and s * af.denominator >= af.numerator * n
        expands = (int(r_neighborhood(X, cur, R0).size) - s) * cf.denominator > cf.numerator * s
        grows = t * cf.denominator >= (cf.denominator + cf.numerator) * s
        steps.append(GrowthStep(i, s, t, in_window, expands, grows))
        if in_window and not grows and failed is None:
            failed = i
        sizes.append(t)
        cur = nxt
    return GrowthTrace(failed is None, failed, steps, sizes)


# ---------------------------------------------------------------- audit


@dataclass(frozen=True)
class AuditRow:
    piece: int
    R: float
    separation: float
    propagation: float
    mode: str
    ok: bool


@dataclass
class AuditReport:
    rows: list[AuditRow]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)


def default_radii(S: SpaceSequence) -> list[float]:
    top = max(1, int(math.ceil(max(p.diam for p in S.pieces))))
    return [float(r) for r in range(1, top + 1)]


def ql_equivalence_audit(
    S: SpaceSequence | FiniteMetricSpace,
    R_list: Sequence[float] | None = None,
    mode: str = "exact",
    max_exact: int = MAX_EXACT_DEFAULT,
    threads: int | None = None,
) -> AuditReport:
    """Compare sqrt(max product)/|X| with the propagation of the averaging block.

    Exact mode demands agreement within 1e-9; heuristic mode checks that the
    separation lower bound does not exceed the exact propagation (pieces
    above ``max_exact`` are compared against the heuristic propagation).
    """
    _check_mode(mode)
    S = _as_sequence(S)
    R_list = default_radii(S) if R_list is None else list(R_list)
    P = averaging_projection(S)

    def one(k: int) -> list[AuditRow]:
        piece = S.pieces[k]
        sep = _piece_separation(piece, k, R_list, mode, max_exact)
        pmode = "exact" if piece.n <= max_exact else "heuristic"
        if mode == "exact":
            pmode = "exact"
        prop = piece_propagation(P, k, R_list, pmode, max_exact)
        rows = []
        for s, p in zip(sep, prop):
            lhs = math.sqrt(s.max_product) / piece.n
            if mode == "exact":
                ok = abs(lhs - p.eps) <= AUDIT_TOL
            else:
                ok = lhs <= p.eps + AUDIT_TOL if pmode == "exact" else True
            rows.append(AuditRow(k, s.R, lhs, p.eps, mode, ok))
        return rows

    return AuditReport([r for part in pmap(one, range(len(S)), threads) for r in part])
