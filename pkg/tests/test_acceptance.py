"""Acceptance criteria, one group of tests per criterion (see conftest for the summary lines)."""

from __future__ import annotations

import itertools
import json
import math
import os
import subprocess
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

import oracles as orc
from instances import random_explicit, random_graph
from asympexp import (
    CoarseMap,
    SpaceSequence,
    asymptotic_certificate,
    averaging_projection,
    boundary_transfer_check,
    compression,
    cycle,
    discrete_laplacian,
    estimate_moduli,
    expansion_profile,
    frobenius_norm,
    glued_sequence,
    greedy_decomposition,
    half_selection,
    hypercube,
    kernel_projection,
    non_ula_certificate,
    operator_norm,
    path,
    poincare_constant,
    poincare_slack,
    pullback_bound_check,
    random_regular,
    separated_product,
    spectral_gap,
    ql_equivalence_audit,
)
from asympexp.errors import GateFailed
from asympexp.linalg import batched_norms
from asympexp.ula import SparseDecomposition

acc = pytest.mark.acceptance


def _subset_matrix(n: int) -> np.ndarray:
    """Row m is the indicator vector of the bitmask m."""
    m = np.arange(1 << n)[:, None]
    return ((m >> np.arange(n)[None, :]) & 1).astype(np.float64)


# ---------------------------------------------------------------- 1


def _projection_block(n: int) -> tuple[object, np.ndarray]:
    P = averaging_projection(SpaceSequence.of(cycle(12)), support=range(n))
    return P, P.entries[:n, :n]


@acc(1)
@pytest.mark.parametrize("n", range(2, 13))
def test_compression_norm_bracket_all_pairs(n):
    # Frobenius is an upper bound, ||M 1_B|| / ||1_B|| a lower bound; both
    # pinned to the formula for every (A, B) pins the operator norm too.
    _, E = _projection_block(n)
    M = _subset_matrix(n)
    size = M.sum(axis=1)
    want = np.sqrt(np.outer(size, size)) / n
    upper = np.sqrt(M @ (E * E) @ M.T)
    with np.errstate(divide="ignore", invalid="ignore"):
        lower = np.sqrt(M @ (E @ M.T) ** 2) / np.sqrt(size)[None, :]
    lower[:, 0] = 0.0
    assert np.abs(upper - want).max() <= 1e-9
    assert np.abs(lower - want).max() <= 1e-9


@acc(1)
@pytest.mark.parametrize("n", range(2, 11))
def test_compression_norm_batched_all_pairs(n):
    _, E = _projection_block(n)
    M = _subset_matrix(n)
    size = M.sum(axis=1)
    worst = 0.0
    for a in range(1 << n):
        stack = (M[a][:, None] * E)[None, :, :] * M[:, None, :]
        got = batched_norms(stack)
        worst = max(worst, float(np.abs(got - np.sqrt(size[a] * size) / n).max()))
    assert worst <= 1e-9


@acc(1)
@pytest.mark.parametrize("n", range(2, 13))
def test_compression_norm_public_api(n):
    # The projection commutes with permutations of F, so the norm depends only
    # on (|A & B|, |A - B|, |B - A|); one representative per class covers all
    # pairs.  Small F are also enumerated outright.
    P, _ = _projection_block(n)
    pairs = []
    for i, a, b in itertools.product(range(n + 1), repeat=3):
        if i + a + b <= n:
            pairs.append((list(range(i + a)), list(range(a, a + i + b))))
    if n <= 6:
        subs = [list(s) for s in orc.subsets(n)]
        pairs += [(A, B) for A in subs for B in subs]
    for A, B in pairs:
        got = operator_norm(compression(P, A, B))
        assert abs(got - math.sqrt(len(A) * len(B)) / n) <= 1e-9, (A, B)


# ---------------------------------------------------------------- 2


@acc(2)
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_glued_sequence_block_norms(seed):
    S, parts = glued_sequence([16, 36, 64, 100, 144, 196], degree=3, seed=seed)
    base = np.concatenate([S.offsets[k] + np.arange(x) for k, (x, _) in enumerate(parts)])
    Dop = averaging_projection(S) - averaging_projection(S, support=base)
    frob = []
    for k, (x, f) in enumerate(parts):
        assert f == math.ceil(math.sqrt(x))
        blk = Dop.block(k)
        fr = frobenius_norm(blk)
        closed = math.sqrt((2 * x * f + 2 * f * f) / (x + f) ** 2)
        assert abs(fr - closed) <= 1e-12
        op = operator_norm(blk)
        assert op <= fr + 1e-12
        assert op == pytest.approx(math.sqrt(f / (x + f)), abs=1e-9)
        frob.append(fr)
    assert all(a > b for a, b in zip(frob, frob[1:]))


# ---------------------------------------------------------------- 3


def _random_sequence(rng, max_n: int, pieces=(1, 3)):
    out = []
    for _ in range(int(rng.integers(pieces[0], pieces[1] + 1))):
        n = int(rng.integers(2, max_n + 1))
        kind = rng.integers(4)
        if kind == 0:
            out.append(random_graph(n, rng))
        elif kind == 1:
            out.append(random_explicit(n, rng))
        elif kind == 2 and n >= 3:
            out.append(cycle(n))
        else:
            out.append(path(n))
    return SpaceSequence(tuple(out))


@acc(3)
def test_separation_propagation_bridge():
    rng = np.random.default_rng(3)
    for _ in range(50):
        S = _random_sequence(rng, 14)
        rep = ql_equivalence_audit(S)
        assert rep.ok
        radii = sorted({r.R for r in rep.rows})
        assert radii[-1] >= max(p.diam for p in S.pieces)
        for row in rep.rows:
            piece = S.pieces[row.piece]
            assert abs(row.propagation - row.separation) <= 1e-9
            if piece.n <= 7:
                d = piece.dist.tolist()
                assert row.separation == pytest.approx(math.sqrt(orc.max_product(d, row.R)) / piece.n, abs=1e-12)


# ---------------------------------------------------------------- 4


@acc(4)
@pytest.mark.parametrize("R", [1, 2, 3])
def test_cycle_counterexample(R):
    n = 8 * R
    X = cycle(n)
    row = expansion_profile(X, [Fraction(1, 2)], [R], "exact", max_exact=24).rows[0]
    assert row.ratio == Fraction(1, 2)
    assert len(row.witness) == 4 * R
    w = sorted(row.witness)
    assert any(w == sorted((s + i) % n for i in range(4 * R)) for s in range(n))
    cert = asymptotic_certificate(X, Fraction(1, 2), Fraction(1, 2), R, max_exact=24)
    assert cert.verdict == "Refuted"
    assert Fraction(cert.boundary, cert.size) == Fraction(1, 2)


# ---------------------------------------------------------------- 5


def _connected_sequences():
    rng = np.random.default_rng(5)
    yield SpaceSequence.of(random_graph(200, rng), random_graph(200, rng, 0.05), random_graph(150, rng), random_graph(50, rng))
    yield SpaceSequence.of(cycle(120), path(90), hypercube(6), random_regular(100, 3, seed=1), random_regular(150, 4, seed=2))
    yield SpaceSequence.of(*(random_graph(int(n), rng) for n in rng.integers(1, 40, size=12)))
    yield SpaceSequence.of(path(1), path(2), cycle(3))


@acc(5)
@pytest.mark.parametrize("S", list(_connected_sequences()), ids=["big-random", "families", "many-small", "tiny"])
def test_kernel_projection_identity(S):
    assert S.total <= 600
    lap = discrete_laplacian(S)
    _, kdim = spectral_gap(lap)
    assert kdim == len(S)
    K = kernel_projection(lap)
    assert np.abs(K.entries - averaging_projection(S).entries).max() <= 1e-8


# ---------------------------------------------------------------- 6


@acc(6)
def test_poincare_constant():
    rng = np.random.default_rng(6)
    pieces = [cycle(9), path(17), hypercube(4), random_regular(30, 3, seed=4), random_regular(64, 5, seed=8)]
    pieces += [random_graph(int(n), rng) for n in rng.integers(2, 60, size=10)]
    S = SpaceSequence(tuple(pieces))
    consts = poincare_constant(S)
    for piece, c in zip(S.pieces, consts):
        lam = np.linalg.eigvalsh(orc.laplacian(piece.n, piece.edges))
        assert abs(c - 2 * lam[1]) <= 1e-8
        for _ in range(100):
            f = rng.standard_normal(piece.n)
            f -= f.mean()
            f /= np.linalg.norm(f)
            assert poincare_slack(piece, f, c) >= -1e-9


# ---------------------------------------------------------------- 7


def _random_map(rng):
    X = _random_sequence(rng, 9, (1, 3))
    Y = _random_sequence(rng, 9, (len(X), 3))
    match = rng.permutation(len(Y))[: len(X)]
    maps = []
    for p, k in zip(X.pieces, match):
        k = int(k)
        m = Y.pieces[k].n
        style = rng.integers(3)
        if style == 0 and p.n >= m:
            img = np.concatenate([rng.permutation(m), rng.integers(m, size=p.n - m)])
            loc = [int(v) for v in rng.permutation(img)]
        else:
            loc = [int(v) for v in rng.integers(m, size=p.n)]
        if style == 2 and len(Y) > 1:
            other = int((k + 1) % len(Y))
            loc[0] = [other, int(rng.integers(Y.pieces[other].n))]
        maps.append((k, loc))
    return CoarseMap.from_pieces(X, Y, maps)


def _union(S: SpaceSequence) -> np.ndarray:
    sd = [(p.n, p.diam) for p in S.pieces]
    d = np.zeros((S.total, S.total))
    for i, j in itertools.product(range(len(S)), repeat=2):
        blk = S.pieces[i].dist if i == j else orc.union_gap(sd, i, j)
        d[S.piece_slice(i), S.piece_slice(j)] = blk
    return d


def _outer(d, A, R):
    A = set(int(a) for a in A)
    return sum(1 for x in range(len(d)) if x not in A and any(d[x][a] <= R for a in A))


def _inner(d, A, R):
    A = set(int(a) for a in A)
    comp = [x for x in range(len(d)) if x not in A]
    return sum(1 for a in A if any(d[a][x] <= R for x in comp))


@acc(7)
def test_coarse_inequality_battery():
    rng = np.random.default_rng(7)
    counts = {"pullback": 0, "half": 0, "transfer": 0}
    for _ in range(1000):
        m = _random_map(rng)
        X, Y = m.domain, m.codomain
        dY, dX = _union(Y), _union(X)
        n = int(rng.integers(len(X)))
        xs = X.piece_slice(n)
        img = m.image[xs]
        tgt = np.flatnonzero(np.isin(Y.piece_index, np.unique(Y.piece_index[img])))
        dT = dY[np.ix_(tgt, tgt)]
        pos = {int(y): i for i, y in enumerate(tgt)}
        limg = sorted({pos[int(y)] for y in img})
        D = float(dT[:, limg].min(axis=1).max())
        size = int(rng.integers(1, tgt.size + 1))
        Bl = sorted(int(v) for v in rng.choice(tgt.size, size=size, replace=False))
        B = tgt[Bl]
        pre = [i for i, y in enumerate(img) if pos[int(y)] in set(Bl)]
        NY = orc.growth(dY.tolist(), D)

        chk = pullback_bound_check(m, B, piece=n)
        assert chk.lhs == len(pre)
        assert chk.rhs == Fraction(len(Bl) - _inner(dT, Bl, D), NY)
        assert chk.ok
        counts["pullback"] += 1

        gates = 2 * len(Bl) <= tgt.size and Fraction(1) - Fraction(NY * _outer(dT, Bl, D), len(Bl)) >= Fraction(1, 2)
        try:
            hs = half_selection(m, B, piece=n)
        except GateFailed:
            assert not gates
        else:
            assert gates
            nx = X.pieces[n].n
            A = sorted(int(a) - int(X.offsets[n]) for a in hs.A)
            assert A == pre or A == sorted(set(range(nx)) - set(pre))
            assert 2 * len(A) <= nx and 2 * NY * len(A) >= len(Bl)
            assert hs.ok
            counts["half"] += 1

        S = float(rng.integers(0, 4))
        mod = estimate_moduli(m)
        K = int(max(np.bincount(m.image)))
        dXn = X.pieces[n].dist
        rho = max(dY[m.image[xs][i], m.image[xs][j]] for i in range(dXn.shape[0]) for j in range(dXn.shape[0]) if dXn[i, j] <= S)
        assert mod.K == K and mod.rho_plus_at(S) >= rho
        NX = orc.growth(dX.tolist(), S)
        rhs = K * NX * _outer(dT, Bl, mod.rho_plus_at(S))
        comp = sorted(set(range(dXn.shape[0])) - set(pre))
        for c, A in zip(boundary_transfer_check(m, B, S, piece=n), (pre, comp)):
            assert c.lhs == _outer(dXn, A, S) and c.rhs == rhs
            assert c.ok
        tight = K * _outer(dT, Bl, rho)
        assert _outer(dXn, pre, S) <= tight
        counts["transfer"] += 1
    assert counts["half"] >= 100, counts


# ---------------------------------------------------------------- 8


def _raw_verify(X, cert, R):
    d = X.dist
    A, B = cert.A, cert.B
    assert A and B and not set(A) & set(B)
    assert min(d[a, b] for a in A for b in B) >= R
    assert Fraction(len(A) * len(B), X.n**2) >= Fraction(1, 32)
    assert cert.product == Fraction(len(A) * len(B), X.n**2)
    blocks = cert.blocks
    for i, j in itertools.combinations(range(len(blocks)), 2):
        assert min(d[a, b] for a in blocks[i] for b in blocks[j]) > R
    assert all(max(d[a, b] for a in blk for b in blk) <= cert.S for blk in blocks)
    assert set(A) | set(B) == {x for blk in blocks for x in blk}


@acc(8)
@pytest.mark.parametrize("n,R,gate", [(64, 2, False), (192, 1, True), (320, 2, True)])
def test_cycle_certificates(n, R, gate):
    X = cycle(n)
    (cert,) = non_ula_certificate(X, R, Fraction(1, 2), size_gate=gate)
    assert cert.status == "Certified", cert.reason
    _raw_verify(X, cert, R)
    if gate:
        assert cert.size_ratio < Fraction(1, 32)


@acc(8)
@pytest.mark.parametrize("n,seed", [(64, 0), (64, 1), (96, 2), (128, 3)])
def test_regular_certificates(n, seed):
    X = random_regular(n, 3, seed=seed)
    lam = np.linalg.eigvalsh(orc.laplacian(n, X.edges))[1]
    assert lam > 0
    for R in (1, 2):
        (cert,) = non_ula_certificate(X, R, Fraction(1, 2))
        if cert.certified:
            _raw_verify(X, cert, R)
        else:
            assert cert.status == "Inapplicable" and cert.reason


@acc(8)
def test_greedy_success_measure():
    rng = np.random.default_rng(8)
    hits = 0
    for _ in range(60):
        X = [cycle(int(rng.integers(8, 60))), path(int(rng.integers(5, 40))), random_graph(int(rng.integers(5, 40)), rng)][rng.integers(3)]
        F = sorted(set(int(v) for v in rng.choice(X.n, size=int(rng.integers(1, X.n + 1)), replace=False)))
        eps = Fraction(int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        R, S = float(rng.integers(1, 3)), float(rng.integers(0, 8))
        out = greedy_decomposition(X, F, R, eps, S, max_exact=12)
        if isinstance(out, SparseDecomposition):
            hits += 1
            covered = sum(len(b) for b in out.blocks)
            assert Fraction(covered, len(F)) > 1 / (1 + eps)
            assert all(out.verify(X).values())
    assert hits >= 10


# ---------------------------------------------------------------- 9


@acc(9)
def test_heuristic_exact_sandwich():
    rng = np.random.default_rng(9)
    alphas = [Fraction(0), Fraction(1, 4), Fraction(1, 3), Fraction(1, 2)]
    for _ in range(500):
        S = _random_sequence(rng, 14, (1, 1))
        R_list = [1.0, 2.0, 3.0]
        ex = expansion_profile(S, alphas, R_list, "exact")
        he = expansion_profile(S, alphas, R_list, "heuristic")
        for a, b in zip(ex.rows, he.rows):
            assert b.min_ratio >= a.min_ratio
        sx = separated_product(S, R_list, "exact")
        sh = separated_product(S, R_list, "heuristic")
        for a, b in zip(sx.rows, sh.rows):
            assert b.max_product <= a.max_product


# ---------------------------------------------------------------- 10


def _cli(*args, cwd):
    env = dict(os.environ)
    env.pop("ASYMPEXP_THREADS", None)
    return subprocess.run([sys.executable, "-m", "asympexp", *map(str, args)], cwd=cwd, env=env,
                          capture_output=True, text=True)


@pytest.fixture(scope="module")
def inputs(tmp_path_factory):
    d = tmp_path_factory.mktemp("inputs")
    for name, args in {
        "cyc": ["--family", "cycle", "--sizes", "6,9,12"],
        "rr": ["--family", "random-regular", "--degree", 3, "--sizes", "10,12", "--seed", 5],
        "glued": ["--family", "glued", "--base", "random-regular", "--degree", 3, "--sizes", "16,36", "--seed", 2],
        "big": ["--family", "cycle", "--sizes", "64"],
    }.items():
        assert _cli("gen", *args, "--out", d / f"{name}.json", cwd=d).returncode == 0
    r = _cli("gen", "--family", "interleaved", "--count", 4, "--out", d / "il", cwd=d)
    assert r.returncode == 0, r.stderr
    return d


COMMANDS = {
    "gen-rr": lambda d: ["gen", "--family", "random-regular", "--degree", 3, "--sizes", "8,10,14", "--seed", 11],
    "gen-interleaved": lambda d: ["gen", "--family", "interleaved", "--count", 3],
    "expansion": lambda d: ["expansion", d / "cyc.json", "--alpha", "0,1/3,1/2", "--r", "1..3", "--c", "1/2"],
    "expansion-heuristic": lambda d: ["expansion", d / "glued.json", "--mode", "heuristic", "--r", "1,2"],
    "ql-profile": lambda d: ["ql-profile", d / "rr.json"],
    "spectral": lambda d: ["spectral", d / "glued.json"],
    "ula": lambda d: ["ula", d / "big.json", "--r", 2, "--no-size-gate"],
    "coarse": lambda d: ["coarse", d / "il.X.json", d / "il.Y.json", d / "il.map.json"],
    "audit": lambda d: ["audit", d / "cyc.json"],
}


def _outputs(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if not p.name.endswith(".manifest.json")}


@acc(10)
@pytest.mark.parametrize("name", list(COMMANDS))
def test_replay_determinism(name, inputs, tmp_path):
    runs = []
    first = tmp_path / "t1"
    first.mkdir()
    base = COMMANDS[name](inputs)
    r = _cli(*base, "--threads", 1, "--out", first / "out", "--manifest", tmp_path / "run.json", cwd=tmp_path)
    assert r.returncode in (0, 1), r.stderr
    runs.append((r.returncode, _outputs(first)))
    for label, threads in (("t8", 8), ("t1b", 1)):
        d = tmp_path / label
        d.mkdir()
        rr = _cli("--replay", tmp_path / "run.json", "--threads", threads, "--out", d / "out",
                  "--manifest", tmp_path / f"{label}.json", cwd=tmp_path)
        runs.append((rr.returncode, _outputs(d)))
        man = json.loads((tmp_path / f"{label}.json").read_text())
        assert man["modeFlags"]["threads"] == threads
    code0, out0 = runs[0]
    assert out0
    for code, out in runs[1:]:
        assert code == code0
        assert out == out0
