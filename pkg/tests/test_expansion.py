import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from asympexp import (
    SpaceSequence,
    admissible_window,
    asymptotic_certificate,
    cheeger_constant,
    complete,
    cycle,
    edge_path_metric,
    expansion_profile,
    growth_lemma_check,
    path,
    ql_equivalence_audit,
    r_boundary,
    separated_product,
)
from asympexp.errors import EmptyAdmissibleFamily, ExactTooLarge
from asympexp.space import FiniteMetricSpace
from instances import graphs, random_graph


def test_admissible_window():
    assert admissible_window(8, Fraction(1, 2)) == (4, 4)
    assert admissible_window(10, Fraction(1, 3)) == (4, 5)
    assert admissible_window(9, 0) == (1, 4)
    with pytest.raises(EmptyAdmissibleFamily):
        admissible_window(9, Fraction(1, 2))


def test_cycle_arcs_minimise():
    for R in (1, 2):
        row = expansion_profile(cycle(8 * R), [Fraction(1, 2)], [R]).rows[0]
        assert row.ratio == Fraction(1, 2)
        A = list(row.witness)
        assert len(A) == 4 * R
        assert oracles.set_dist(cycle(8 * R).dist, A, A) == 0 and max(np.diff(A)) == 1
        assert r_boundary(cycle(8 * R), A, R).size == 2 * R


def test_complete_graph_profile():
    for n in (4, 5, 7):
        row = expansion_profile(complete(n), [0], [1]).rows[0]
        assert row.ratio == Fraction(n - n // 2, n // 2)


def test_vacuous_rows():
    rep = expansion_profile(cycle(9), [Fraction(1, 2)], [1])
    r = rep.rows[0]
    assert r.vacuous and r.min_ratio == math.inf and r.ratio is None
    assert rep.to_csv().splitlines()[1] == "0,0.5,1,inf,,exact"
    cert = asymptotic_certificate(cycle(9), Fraction(1, 2), Fraction(1, 2), 1)
    assert cert.verdict == "HoldsOnPrefix"


def test_exact_limit():
    with pytest.raises(ExactTooLarge):
        expansion_profile(cycle(20), [0.5], [1])
    assert expansion_profile(cycle(20), [0.5], [1], max_exact=20).rows[0].min_ratio == 0.2


def test_cheeger():
    h, A = cheeger_constant(complete(4))
    assert h == 1 and len(A) in (1, 2)
    h, A = cheeger_constant(cycle(8))
    assert h == 0.5 and len(A) == 4
    gap = np.array([[0.0, 1, 5, 6], [1, 0, 4, 5], [5, 4, 0, 1], [6, 5, 1, 0]])
    h, A = cheeger_constant(FiniteMetricSpace(gap))
    assert h == 0 and sorted(A) in ([0, 1], [2, 3])
    assert cheeger_constant(FiniteMetricSpace(gap), "heuristic")[0] == 0
    assert cheeger_constant(FiniteMetricSpace(np.zeros((1, 1))))[0] == math.inf


def test_certificates():
    S = SpaceSequence.of(cycle(4), cycle(8), cycle(12))
    c = asymptotic_certificate(S, Fraction(1, 2), Fraction(1, 2), 1)
    # C_4 already fails: an arc of two has boundary 2 = 1 * 2 > 1/2 * 2, C_8 arc {0..3} gives equality
    assert c.verdict == "Refuted" and c.piece == 1
    assert c.boundary * 2 == c.size
    js = c.to_json()
    assert js["verdict"] == "Refuted" and js["prefixLength"] == 3 and js["witness"]["A"] == [0, 1, 2, 3]
    ok = asymptotic_certificate(complete(6), Fraction(1, 3), Fraction(1, 2), 1)
    assert ok.verdict == "HoldsOnPrefix" and "witness" not in ok.to_json()
    h = asymptotic_certificate(complete(6), Fraction(1, 3), Fraction(1, 2), 1, mode="heuristic")
    assert h.verdict == "Inconclusive"


def test_separation_examples():
    rep = separated_product(cycle(8), [3])
    r = rep.rows[0]
    assert r.max_product == 4 and r.normalized == 4 / 64
    assert oracles.set_dist(cycle(8).dist, r.witness_a, r.witness_b) >= 3
    assert separated_product(cycle(8), [5]).rows[0].max_product == 0
    for n in (5, 6, 7):
        assert separated_product(complete(n), [0.5]).rows[0].max_product == (n // 2) * (n - n // 2)
    with pytest.raises(ValueError):
        separated_product(cycle(5), [0])
    S = SpaceSequence.of(cycle(8), path(5))
    sup = separated_product(S, [1, 4]).sequence_sup()
    assert sup == [(1.0, 16 / 64, 0), (4.0, 1 / 25, 1)]


def test_growth_lemma():
    t = growth_lemma_check(complete(6), [0], Fraction(1, 2), 1, 3)
    assert t.ok and t.sizes == [1, 6]
    t = growth_lemma_check(complete(6), [0, 1, 2, 3], Fraction(1, 2), 1, 3)
    assert t.ok and t.steps == []
    t = growth_lemma_check(cycle(16), [0, 1, 2, 3], 1, 1, 3)
    assert not t.ok and t.failed_step == 0 and t.sizes[:2] == [4, 6]
    assert not t.steps[0].expands


def test_ql_audit_small():
    S = SpaceSequence.of(cycle(6), path(4), FiniteMetricSpace(np.zeros((1, 1))))
    rep = ql_equivalence_audit(S)
    assert rep.ok
    assert all(r.separation == 0 and r.propagation == 0 for r in rep.rows if r.piece == 2)
    h = ql_equivalence_audit(S, mode="heuristic")
    assert h.ok and all(r.mode == "heuristic" for r in h.rows)


def test_oracle_agreement_random():
    rng = np.random.default_rng(4)
    for _ in range(12):
        X = random_graph(int(rng.integers(2, 9)), rng)
        d = X.dist.tolist()
        for R in (1, 2):
            for a in (0, Fraction(1, 3)):
                row = expansion_profile(X, [a], [R]).rows[0]
                want = oracles.min_ratio(d, a, R)
                assert row.ratio == want
                if want is not None:
                    assert Fraction(len(oracles.boundary(d, row.witness, R)), len(row.witness)) == want
            assert separated_product(X, [R]).rows[0].max_product == oracles.max_product(d, R)
        assert cheeger_constant(X)[0] == pytest.approx(float(oracles.cheeger(d)), abs=0)


@settings(max_examples=40, deadline=None)
@given(graphs(2, 10))
def test_profile_monotonicity(g):
    n, edges = g
    X = edge_path_metric(edges, n)
    alphas = [0, Fraction(1, 4), Fraction(1, 3), Fraction(1, 2)]
    Rs = [1, 2, 3]
    rep = expansion_profile(X, alphas, Rs)
    for a in alphas:
        vals = [rep.row(0, a, R).min_ratio for R in Rs]
        assert all(x <= y for x, y in zip(vals, vals[1:]))
    for R in Rs:
        vals = [rep.row(0, a, R).min_ratio for a in alphas]
        assert all(x <= y for x, y in zip(vals, vals[1:]))
    sep = [r.normalized for r in separated_product(X, Rs).rows]
    assert all(0 <= v <= 0.25 for v in sep)
    assert all(x >= y for x, y in zip(sep, sep[1:]))


@settings(max_examples=40, deadline=None)
@given(graphs(2, 11))
def test_heuristic_bounds_and_cheeger_bracket(g):
    n, edges = g
    X = edge_path_metric(edges, n)
    h_exact, _ = cheeger_constant(X)
    h_heur, A = cheeger_constant(X, "heuristic")
    assert h_heur >= h_exact
    assert r_boundary(X, A, 1).size / len(A) == h_heur
    lam = np.linalg.eigvalsh(oracles.laplacian(n, edges))[1]
    maxdeg = max((X.dist == 1).sum(axis=1))
    assert lam / (2 * maxdeg) <= h_exact + 1e-12
    assert h_exact > 0
    for mode_row_e, mode_row_h in zip(expansion_profile(X, [Fraction(1, 4)], [1, 2]).rows,
                                      expansion_profile(X, [Fraction(1, 4)], [1, 2], "heuristic").rows):
        assert mode_row_h.min_ratio >= mode_row_e.min_ratio


def test_heuristic_finds_long_arcs():
    rows = expansion_profile(cycle(30), [Fraction(1, 3)], [1, 2], "heuristic").rows
    assert all(r.mode == "heuristic" for r in rows)
    assert [r.ratio for r in rows] == [Fraction(2, 15), Fraction(4, 15)]
