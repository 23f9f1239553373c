"""Maps between space sequences, empirical coarse moduli and transfer inequalities.

A :class:`CoarseMap` is a global point map from the domain prefix to the
codomain prefix.  Each domain piece ``X_n`` is analysed against ``Y'_n``,
the union of the codomain pieces its image touches (with the union
metric), so maps that split a piece across several codomain pieces are
handled honestly instead of being rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from ._subsets import as_fraction
from .errors import AmbiguousPieceMatch, DensityViolated, GateFailed, OutOfRangeIndex
from .space import SpaceSequence, growth_function, point_set


@dataclass(frozen=True, eq=False)
class CoarseMap:
    domain: SpaceSequence
    codomain: SpaceSequence
    image: np.ndarray
    piece_match: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        img = np.asarray(self.image, dtype=np.int64).copy()
        if img.shape != (self.domain.total,):
            raise ValueError(f"need one image point per domain point ({self.domain.total}), got {img.shape}")
        if img.size and (img.min() < 0 or img.max() >= self.codomain.total):
            raise OutOfRangeIndex("image point outside the codomain")
        img.setflags(write=False)
        object.__setattr__(self, "image", img)
        if self.piece_match is None:
            object.__setattr__(self, "piece_match", tuple(infer_piece_match(self)))
        else:
            pm = tuple(int(k) for k in self.piece_match)
            if len(pm) != len(self.domain):
                raise ValueError("piece match needs one entry per domain piece")
            if len(set(pm)) != len(pm):
                raise AmbiguousPieceMatch("piece match is not injective")
            object.__setattr__(self, "piece_match", pm)

    @classmethod
    def from_pieces(cls, domain: SpaceSequence, codomain: SpaceSequence, maps: Sequence[tuple[int, Sequence]]) -> "CoarseMap":
        """Build from per-piece maps ``(k, local targets)``; a target may be a ``(k', j)`` pair."""
        image = np.empty(domain.total, dtype=np.int64)
        match = []
        for n, (k, targets) in enumerate(maps):
            if len(targets) != domain.pieces[n].n:
                raise ValueError(f"piece {n}: map must list {domain.pieces[n].n} targets")
            for i, t in enumerate(targets):
                kk, j = (int(t[0]), int(t[1])) if isinstance(t, (list, tuple)) else (int(k), int(t))
                if not (0 <= kk < len(codomain) and 0 <= j < codomain.pieces[kk].n):
                    raise OutOfRangeIndex(f"piece {n} point {i}: target ({kk}, {j}) out of range")
                image[domain.offsets[n] + i] = codomain.offsets[kk] + j
            match.append(int(k))
        return cls(domain, codomain, image, tuple(match))

    @classmethod
    def identity(cls, S: SpaceSequence) -> "CoarseMap":
        return cls(S, S, np.arange(S.total), tuple(range(len(S))))

    def piece_points(self, n: int) -> np.ndarray:
        return np.arange(self.domain.offsets[n], self.domain.offsets[n + 1])

    def touched(self, n: int) -> np.ndarray:
        """Codomain pieces hit by the image of domain piece ``n`` (sorted)."""
        return np.unique(self.codomain.piece_index[self.image[self.piece_points(n)]])

    def target_points(self, n: int) -> np.ndarray:
        """Global codomain points of Y'_n."""
        return np.concatenate([np.arange(self.codomain.offsets[k], self.codomain.offsets[k + 1]) for k in self.touched(n)])

    @cached_property
    def _ydist(self) -> np.ndarray:
        return self.codomain.union_dist()

    def target_dist(self, n: int) -> np.ndarray:
        t = self.target_points(n)
        return self._ydist[np.ix_(t, t)]

    def fibers(self) -> np.ndarray:
        return np.bincount(self.image, minlength=self.codomain.total)


def infer_piece_match(m: CoarseMap) -> list[int]:
    """Match each domain piece to the codomain piece holding most of its image."""
    out = []
    for n in range(len(m.domain)):
        pts = m.image[m.domain.offsets[n] : m.domain.offsets[n + 1]]
        counts = np.bincount(m.codomain.piece_index[pts], minlength=len(m.codomain))
        top = np.flatnonzero(counts == counts.max())
        if top.size > 1:
            raise AmbiguousPieceMatch(f"domain piece {n} splits evenly over codomain pieces {top.tolist()}")
        out.append(int(top[0]))
    if len(set(out)) != len(out):
        raise AmbiguousPieceMatch(f"inferred piece match {out} is not injective")
    return out


# ---------------------------------------------------------------- moduli


@dataclass(frozen=True)
class CoarseModuli:
    """Step-function moduli sampled at the realised domain distances ``t``."""

    t: np.ndarray
    rho_plus: np.ndarray
    rho_minus: np.ndarray
    D: float
    K: int
    prefix_length: int
    piece_D: tuple[float, ...] = ()

    def rho_plus_at(self, s: float) -> float:
        """Max image distance over pairs at domain distance <= s (0 below all samples)."""
        i = int(np.searchsorted(self.t, s, side="right")) - 1
        return 0.0 if i < 0 else float(self.rho_plus[i])

    def rho_minus_at(self, s: float) -> float:
        """Min image distance over pairs at domain distance >= s (+inf above all samples)."""
        i = int(np.searchsorted(self.t, s, side="left"))
        return float("inf") if i >= self.t.size else float(self.rho_minus[i])


def _piece_pairs(m: CoarseMap, n: int) -> tuple[np.ndarray, np.ndarray]:
    pts = m.piece_points(n)
    dx = m.domain.pieces[n].dist.ravel()
    img = m.image[pts]
    dy = m._ydist[np.ix_(img, img)].ravel()
    return dx, dy


def estimate_moduli(m: CoarseMap) -> CoarseModuli:
    dxs, dys = zip(*(_piece_pairs(m, n) for n in range(len(m.domain))))
    dx, dy = np.concatenate(dxs), np.concatenate(dys)
    t = np.unique(dx)
    idx = np.searchsorted(t, dx)
    mx = np.full(t.size, -np.inf)
    mn = np.full(t.size, np.inf)
    np.maximum.at(mx, idx, dy)
    np.minimum.at(mn, idx, dy)
    rho_plus = np.maximum.accumulate(mx)
    rho_minus = np.minimum.accumulate(mn[::-1])[::-1]
    piece_D = []
    for n in range(len(m.domain)):
        tp = m.target_points(n)
        img = np.unique(m.image[m.piece_points(n)])
        piece_D.append(float(m._ydist[np.ix_(tp, img)].min(axis=1).max()))
    K = int(m.fibers().max())
    return CoarseModuli(t, rho_plus, rho_minus, max(piece_D), K, len(m.domain), tuple(piece_D))


def distortion_check(m: CoarseMap, mod: CoarseModuli) -> bool:
    """rho_minus(d) <= d(phi x, phi y) <= rho_plus(d) on every same-piece pair."""
    for n in range(len(m.domain)):
        dx, dy = _piece_pairs(m, n)
        i = np.searchsorted(mod.t, dx)
        if i.max() >= mod.t.size or np.any(mod.t[i] != dx):
            return False
        if np.any(dy > mod.rho_plus[i]) or np.any(dy < mod.rho_minus[i]):
            return False
    return True


# ---------------------------------------------------------------- lemma checks


@dataclass(frozen=True)
class Check:
    lemma: str
    piece: int
    lhs: Fraction
    rhs: Fraction
    relation: str = ">="
    note: str = ""

    @property
    def slack(self) -> Fraction:
        return self.lhs - self.rhs if self.relation == ">=" else self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        return self.slack >= 0

    @property
    def equality(self) -> bool:
        return self.slack == 0

    def to_json(self) -> dict:
        return {
            "lemma": self.lemma,
            "piece": self.piece,
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "relation": self.relation,
            "slack": float(self.slack),
            "ok": self.ok,
            "equality": self.equality,
            "note": self.note,
        }


class _Local:
    """One domain piece against its target union Y'."""

    def __init__(self, m: CoarseMap, n: int):
        self.m, self.n = m, n
        self.xpts = m.piece_points(n)
        self.ypts = m.target_points(n)
        self.dx = m.domain.pieces[n].dist
        self.dy = m.target_dist(n)
        pos = np.full(m.codomain.total, -1, dtype=np.int64)
        pos[self.ypts] = np.arange(self.ypts.size)
        self.pos = pos
        self.psi = pos[m.image[self.xpts]]  # local domain -> local target

    def local_B(self, B: Iterable[int]) -> np.ndarray:
        B = point_set(B, self.m.codomain.total)
        loc = self.pos[B]
        if np.any(loc < 0):
            raise ValueError(f"B is not inside the codomain pieces touched by domain piece {self.n}")
        return loc

    def preimage(self, Bl: np.ndarray) -> np.ndarray:
        mask = np.zeros(self.ypts.size, dtype=bool)
        mask[Bl] = True
        return np.flatnonzero(mask[self.psi])

    @staticmethod
    def outer(d: np.ndarray, A: np.ndarray, R: float) -> int:
        if A.size == 0:
            return 0
        inside = np.zeros(d.shape[0], dtype=bool)
        inside[A] = True
        return int(((d[A] <= R).any(axis=0) & ~inside).sum())

    @staticmethod
    def inner(d: np.ndarray, A: np.ndarray, R: float) -> int:
        inside = np.zeros(d.shape[0], dtype=bool)
        inside[A] = True
        comp = np.flatnonzero(~inside)
        if comp.size == 0 or A.size == 0:
            return 0
        return int(((d[comp][:, A] <= R).any(axis=0)).sum())

    def density(self) -> tuple[float, int]:
        img = np.unique(self.psi)
        gaps = self.dy[:, img].min(axis=1)
        j = int(np.argmax(gaps))
        return float(gaps[j]), int(self.ypts[j])


def _resolve_piece(m: CoarseMap, B: Iterable[int], piece: int | None) -> int:
    if piece is not None:
        return int(piece)
    B = point_set(B, m.codomain.total)
    if B.size == 0:
        raise ValueError("an empty B needs an explicit domain piece")
    ks = set(np.unique(m.codomain.piece_index[B]).tolist())
    hits = [n for n in range(len(m.domain)) if ks <= set(m.touched(n).tolist())]
    if len(hits) != 1:
        raise AmbiguousPieceMatch(f"B lies in the targets of domain pieces {hits}; pass piece explicitly")
    return hits[0]


def _local(m: CoarseMap, B, piece, D) -> tuple[_Local, np.ndarray, float]:
    n = _resolve_piece(m, B, piece)
    loc = _Local(m, n)
    Bl = loc.local_B(B)
    dens, worst = loc.density()
    if D is None:
        D = dens
    elif dens > D:
        raise DensityViolated(f"image of domain piece {n} is not {D}-dense: point {worst} is at distance {dens}", worst, dens)
    return loc, Bl, float(D)


def pullback_bound_check(m: CoarseMap, B: Iterable[int], D: float | None = None, piece: int | None = None) -> Check:
    """|psi^-1 B| >= |B| / N_Y(D) * (1 - |d^in_D B| / |B|), exactly."""
    loc, Bl, D = _local(m, B, piece, D)
    N = growth_function(m.codomain, D)
    lhs = Fraction(loc.preimage(Bl).size)
    rhs = Fraction(Bl.size - loc.inner(loc.dy, Bl, D), N) if Bl.size else Fraction(0)
    return Check("pullback", loc.n, lhs, rhs, ">=", f"D={D:g}, N_Y(D)={N}")


@dataclass
class HalfSelection:
    piece: int
    A: np.ndarray
    side: str
    checks: list[Check]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)


def half_selection(m: CoarseMap, B: Iterable[int], D: float | None = None, piece: int | None = None) -> HalfSelection:
    """Pick A = psi^-1(B) or its complement with |A| <= |X|/2 and |A| >= |B| / (2 N_Y(D)).

    Raises GateFailed naming the hypothesis that does not hold.  ``A`` is
    returned as global domain points.
    """
    loc, Bl, D = _local(m, B, piece, D)
    N = growth_function(m.codomain, D)
    nb, ny, nx = Bl.size, loc.ypts.size, loc.xpts.size
    if nb == 0:
        raise GateFailed("nonempty", "B is empty")
    if 2 * nb > ny:
        raise GateFailed("half-size", f"|B|={nb} > |Y|/2={ny / 2:g}")
    bd = loc.outer(loc.dy, Bl, D)
    if Fraction(1) - Fraction(N * bd, nb) < Fraction(1, 2):
        raise GateFailed("boundary", f"1 - N_Y(D)|d_D B|/|B| = 1 - {N}*{bd}/{nb} < 1/2")
    C = loc.preimage(Bl)
    if 2 * C.size <= nx:
        A, side = C, "B"
    else:
        A, side = np.setdiff1d(np.arange(nx), C), "complement"
    checks = [
        Check("half-selection:upper", loc.n, Fraction(A.size), Fraction(nx, 2), "<="),
        Check("half-selection:lower", loc.n, Fraction(A.size), Fraction(nb, 2 * N), ">="),
    ]
    return HalfSelection(loc.n, loc.xpts[A], side, checks)


def boundary_transfer_check(
    m: CoarseMap,
    B: Iterable[int],
    S: float,
    K: int | None = None,
    rho_plus: float | Callable[[float], float] | None = None,
    piece: int | None = None,
) -> list[Check]:
    """|d_S A| <= K N_X(S) |d_{rho+(S)} B| for A = psi^-1(B) and for its complement.

    Defaults come from :func:`estimate_moduli`.  A supplied ``rho_plus`` that
    is not an upper modulus at scale S is flagged in the notes.
    """
    B = point_set(B, m.codomain.total)
    n = _resolve_piece(m, B, piece)
    loc = _Local(m, n)
    Bl = loc.local_B(B)
    mod = None
    if K is None or rho_plus is None:
        mod = estimate_moduli(m)
    K = mod.K if K is None else int(K)
    if rho_plus is None:
        r = mod.rho_plus_at(S)
    else:
        r = float(rho_plus(S) if callable(rho_plus) else rho_plus)
    img_d = loc.dy[np.ix_(loc.psi, loc.psi)]
    valid = not np.any(img_d[loc.dx <= S] > r)
    NX = growth_function(m.domain, S)
    rhs = Fraction(K * NX * loc.outer(loc.dy, Bl, r))
    C = loc.preimage(Bl)
    note = f"K={K}, N_X(S)={NX}, rho+(S)={r:g}" + ("" if valid else ", rho+ is not an upper modulus at S")
    out = []
    for name, A in (("preimage", C), ("complement", np.setdiff1d(np.arange(loc.xpts.size), C))):
        out.append(Check(f"boundary-transfer:{name}", n, Fraction(loc.outer(loc.dx, A, S)), rhs, "<=", note))
    return out


@dataclass
class TransferTrace:
    piece: int
    codomain_piece: int
    status: str
    A: list[int] = field(default_factory=list)
    side: str = ""
    checks: list[Check] = field(default_factory=list)
    reason: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "transferred" and all(c.ok for c in self.checks)

    def to_json(self) -> dict:
        return {
            "piece": self.piece,
            "codomainPiece": self.codomain_piece,
            "status": self.status,
            "side": self.side,
            "A": self.A,
            "reason": self.reason,
            "checks": [c.to_json() for c in self.checks],
        }


def transfer_refutation(
    m: CoarseMap,
    witnesses: Sequence[Iterable[int]],
    R: float,
    S: float = 1.0,
    alpha=None,
) -> list[TransferTrace]:
    """Push codomain witnesses B_n (small |d_R B|/|B|) back to domain sets A_n.

    Each trace re-verifies the density bound |A| >= alpha |X| / (2 K N_Y(D))
    and the ratio bound |d_S A|/|A| <= K N_X(S) |d_R B| / (|B| / (2 N_Y(D))),
    plus the scale condition R >= max(rho+(S), D).  ``alpha`` defaults to
    each witness's density in its own codomain piece.  A density failure is
    expected when the map does not send pieces to pieces.
    """
    mod = estimate_moduli(m)
    out = []
    for B in witnesses:
        B = point_set(B, m.codomain.total)
        k = int(m.codomain.piece_index[B[0]]) if B.size else -1
        try:
            n = _resolve_piece(m, B, None)
        except (AmbiguousPieceMatch, ValueError) as exc:
            out.append(TransferTrace(-1, k, "skipped", reason=str(exc)))
            continue
        D = mod.piece_D[n]
        loc = _Local(m, n)
        try:
            hs = half_selection(m, B, D, n)
        except GateFailed as exc:
            out.append(TransferTrace(n, k, "skipped", reason=str(exc)))
            continue
        NY = growth_function(m.codomain, D)
        NX = growth_function(m.domain, S)
        r = mod.rho_plus_at(S)
        a = as_fraction(alpha) if alpha is not None else Fraction(B.size, m.codomain.pieces[k].n)
        Al = hs.A - m.domain.offsets[n]
        Bl = loc.local_B(B)
        nx = loc.xpts.size
        bd_A = loc.outer(loc.dx, Al, S)
        bd_B = loc.outer(loc.dy, Bl, R)
        checks = list(hs.checks)
        checks += boundary_transfer_check(m, B, S, mod.K, r, n)
        checks.append(Check("scale", n, Fraction(R), as_fraction(max(r, D)), ">=", "R >= max(rho+(S), D)"))
        checks.append(Check("density", n, Fraction(Al.size), a * nx / (2 * mod.K * NY), ">=", f"alpha={float(a):g}"))
        ratio_rhs = Fraction(mod.K * NX * bd_B) / Fraction(B.size, 2 * NY)
        checks.append(Check("ratio", n, Fraction(bd_A, Al.size) if Al.size else Fraction(0), ratio_rhs, "<="))
        out.append(TransferTrace(n, k, "transferred", [int(x) for x in hs.A], hs.side, checks))
    return out
