"""Uniform local amenability witnesses and the sparse-decomposition certificate.

The greedy procedure repeatedly picks a bounded set E_i inside the
remaining part F_i with small relative R-boundary and removes its
R-neighbourhood.  A successful run yields well separated blocks; splitting
them into two halves produces a pair of R-separated sets of large product,
which is what rules out uniform local amenability for expander-like pieces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from ._parallel import pmap
from ._subsets import (
    MAX_EXACT_DEFAULT,
    any_pair_table,
    as_fraction,
    masks_from_relation,
    members,
    popcount,
    union_table,
)
from .space import FiniteMetricSpace, SpaceSequence, growth_function, point_set, r_neighborhood, set_diameter, set_distance


def normalized_measure(F: Iterable[int], E: Iterable[int]) -> float:
    """|E intersect F| / |F|."""
    F = set(int(x) for x in F)
    if not F:
        raise ValueError("the reference set F must be nonempty")
    hit = sum(1 for x in set(int(e) for e in E) if x in F)
    return float(Fraction(hit, len(F)))


def _satisfies(bnd: int, size: int, eps: Fraction) -> bool:
    return bnd * eps.denominator < eps.numerator * size


def ula_witness(
    X: FiniteMetricSpace,
    F: Iterable[int],
    R: float,
    eps,
    S: float,
    max_exact: int = MAX_EXACT_DEFAULT,
) -> np.ndarray | None:
    """First E inside F with diam(E) <= S and |d_R(E) cap F| < eps|E|, or None.

    Search order: sets B(x, r) cap F for x in F ascending and r over the
    realised distances from x up to S (skipping repeats and sets wider than
    S); then, for |F| <= max_exact, every subset by increasing bitmask.
    """
    F = point_set(F, X.n)
    if F.size == 0:
        return None
    e = as_fraction(eps)
    D = X.dist[np.ix_(F, F)]
    near = D <= R
    seen: set[bytes] = set()
    for i in range(F.size):
        for r in np.unique(D[i]):
            if r > S:
                break
            E = D[i] <= r
            key = E.tobytes()
            if key in seen:
                continue
            seen.add(key)
            idx = np.flatnonzero(E)
            if D[np.ix_(idx, idx)].max() > S:
                continue
            bnd = int((near[idx].any(axis=0) & ~E).sum())
            if _satisfies(bnd, idx.size, e):
                return F[idx]
    m = F.size
    if m > max_exact:
        return None
    masks = np.arange(1 << m, dtype=np.int64)
    wide = any_pair_table(masks_from_relation(D > S))
    sizes = popcount(masks)
    bnd = popcount(union_table(masks_from_relation(near)) & ~masks)
    ok = (sizes > 0) & ~wide & (bnd * e.denominator < e.numerator * sizes)
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return None
    return F[np.asarray(members(int(hits[0])), dtype=np.int64)]


@dataclass
class SparseDecomposition:
    F: np.ndarray
    blocks: list[np.ndarray]
    R: float
    S: float
    eps: Fraction
    measure: Fraction

    @property
    def omega(self) -> np.ndarray:
        return np.sort(np.concatenate(self.blocks)) if self.blocks else np.zeros(0, dtype=np.int64)

    def verify(self, X: FiniteMetricSpace) -> dict[str, bool]:
        """Re-check the structural invariants from the raw sets."""
        Fs = set(self.F.tolist())
        allp = [int(x) for b in self.blocks for x in b]
        checks = {
            "disjoint": len(allp) == len(set(allp)),
            "inside_F": all(x in Fs for x in allp),
            "diam": all(set_diameter(X, b) <= self.S for b in self.blocks),
            "separated": all(
                set_distance(X, self.blocks[i], self.blocks[j]) > self.R
                for i in range(len(self.blocks))
                for j in range(i + 1, len(self.blocks))
            ),
            "measure": self.measure > 1 / (1 + self.eps),
        }
        return checks


@dataclass
class StuckAt:
    residual: np.ndarray
    blocks: list[np.ndarray] = field(default_factory=list)


def greedy_decomposition(
    X: FiniteMetricSpace,
    F: Iterable[int],
    R: float,
    eps,
    S: float,
    max_exact: int = MAX_EXACT_DEFAULT,
) -> SparseDecomposition | StuckAt:
    F = point_set(F, X.n)
    e = as_fraction(eps)
    cur = F.copy()
    blocks: list[np.ndarray] = []
    while cur.size:
        E = ula_witness(X, cur, R, e, S, max_exact)
        if E is None:
            return StuckAt(cur, blocks)
        blocks.append(E)
        cur = np.setdiff1d(cur, r_neighborhood(X, E, R))
    mu = Fraction(sum(b.size for b in blocks), F.size) if F.size else Fraction(0)
    return SparseDecomposition(F, blocks, float(R), float(S), e, mu)


def balanced_split(sizes: Sequence[int], bound: int) -> tuple[list[int], list[int]]:
    """Largest-first greedy split of block indices, each into the lighter side.

    With every size at most ``bound`` the two side sums differ by at most
    ``bound``, so both lie within total/2 +- bound.
    """
    sizes = [int(s) for s in sizes]
    if any(s > bound for s in sizes):
        raise ValueError(f"every block must have size <= {bound}")
    order = sorted(range(len(sizes)), key=lambda i: (-sizes[i], i))
    sides: tuple[list[int], list[int]] = ([], [])
    sums = [0, 0]
    for i in order:
        k = 0 if sums[0] <= sums[1] else 1
        sides[k].append(i)
        sums[k] += sizes[i]
    return sorted(sides[0]), sorted(sides[1])


@dataclass
class NonULACertificate:
    piece: int
    R: float
    status: str
    reason: str = ""
    S: float | None = None
    blocks: list[list[int]] = field(default_factory=list)
    A: list[int] = field(default_factory=list)
    B: list[int] = field(default_factory=list)
    product: Fraction | None = None
    mu: Fraction | None = None
    size_ratio: Fraction | None = None
    size_gate: bool = True
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return self.status == "Certified"

    def to_json(self) -> dict:
        return {
            "piece": self.piece,
            "R": self.R,
            "S": self.S,
            "status": self.status,
            "reason": self.reason,
            "blocks": self.blocks,
            "A": self.A,
            "B": self.B,
            "product": None if self.product is None else float(self.product),
            "gates": {
                "mu": None if self.mu is None else float(self.mu),
                "sizeRatio": None if self.size_ratio is None else float(self.size_ratio),
                "sizeGateEnforced": self.size_gate,
            },
            "checks": self.checks,
        }


def _certify_piece(
    seq: SpaceSequence, k: int, R: float, c: Fraction, size_gate: bool, S_values, max_exact: int
) -> NonULACertificate:
    X = seq.pieces[k]
    n = X.n
    eps = 1 / c - 1
    cands = np.unique(X.dist) if S_values is None else sorted(float(s) for s in S_values)
    dec = None
    for S in cands:
        out = greedy_decomposition(X, X.points(), R, eps, float(S), max_exact)
        if isinstance(out, SparseDecomposition):
            dec = out
            break
    if dec is None:
        return NonULACertificate(k, float(R), "Inapplicable", "greedy decomposition stuck at every tried S", size_gate=size_gate)
    S = dec.S
    N = growth_function(seq, S)
    ratio = Fraction(N, n)
    blocks = [b.tolist() for b in dec.blocks]
    base = dict(S=S, blocks=blocks, mu=dec.measure, size_ratio=ratio, size_gate=size_gate)
    if dec.measure < c:
        return NonULACertificate(k, float(R), "Inapplicable", "mu below c", **base)
    if size_gate and not ratio < Fraction(1, 32):
        return NonULACertificate(k, float(R), "Inapplicable", "N(S)/|X| >= 1/32", **base)
    I1, I2 = balanced_split([len(b) for b in blocks], N)
    A = sorted(x for i in I1 for x in blocks[i])
    B = sorted(x for i in I2 for x in blocks[i])
    product = Fraction(len(A) * len(B), n * n)
    omega = len(A) + len(B)
    checks = dict(dec.verify(X))
    checks["separated_AB"] = bool(A) and bool(B) and set_distance(X, A, B) >= R
    checks["window"] = all(abs(2 * s - omega) <= 2 * N for s in (len(A), len(B)))
    checks["product"] = product >= Fraction(1, 32)
    if size_gate:
        checks["chain"] = product >= Fraction(1, 16) - ratio >= Fraction(1, 32)
    ok = all(checks.values())
    status = "Certified" if ok else "Inapplicable"
    reason = "" if ok else "re-verification failed: " + ", ".join(sorted(kk for kk, v in checks.items() if not v))
    return NonULACertificate(k, float(R), status, reason, A=A, B=B, product=product, checks=checks, **base)


def non_ula_certificate(
    seq: SpaceSequence | FiniteMetricSpace,
    R: float,
    c=Fraction(1, 2),
    size_gate: bool = True,
    S_values: Sequence[float] | None = None,
    max_exact: int = MAX_EXACT_DEFAULT,
    threads: int | None = None,
) -> list[NonULACertificate]:
    """Per piece: blocks, split halves A, B with d(A, B) >= R and |A||B|/|X|^2 >= 1/32.

    S is the smallest value (among the piece's distances, or ``S_values``)
    for which the greedy run with eps = 1/c - 1 succeeds.  With
    ``size_gate=False`` the N(S)/|X| < 1/32 gate is reported but not
    required, and the product bound is checked on the raw sets instead.
    """
    if not isinstance(seq, SpaceSequence):
        seq = SpaceSequence((seq,))
    cf = as_fraction(c)
    if not 0 < cf < 1:
        raise ValueError("c must lie in (0, 1)")
    return pmap(lambda k: _certify_piece(seq, k, R, cf, size_gate, S_values, max_exact), range(len(seq)), threads)
