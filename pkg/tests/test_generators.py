import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from asympexp import (
    GeneratorSpec,
    complete,
    cycle,
    family_sequence,
    glue_example,
    glued_sequence,
    hypercube,
    interleaved_counterexample,
    path,
    r_boundary,
    random_regular,
)
from asympexp.errors import GenerationFailed
from asympexp.generators import small_size


def degrees(X):
    return (X.dist == 1).sum(axis=1)


def test_cycles():
    assert cycle(8).dist[0, 4] == 4
    assert cycle(8).diam == 4 and cycle(9).diam == 4
    assert np.array_equal(cycle(3).dist, complete(3).dist)
    arc = list(range(8))
    assert r_boundary(cycle(16), arc, 2).size == 4
    with pytest.raises(ValueError):
        cycle(2)


def test_hypercube_and_complete():
    Q = hypercube(3)
    assert Q.n == 8 and Q.diam == 3 and set(degrees(Q)) == {3}
    assert complete(5).diam == 1


def test_random_regular():
    assert np.array_equal(random_regular(4, 3, 0).dist, complete(4).dist)
    X = random_regular(10, 3, 7)
    assert set(degrees(X)) == {3}
    Y = random_regular(50, 3, 1)
    lam = np.linalg.eigvalsh(oracles.laplacian(50, Y.edges))
    assert lam[1] > 1e-6
    for bad in [(9, 3), (4, 4), (10, 2)]:
        with pytest.raises(ValueError):
            random_regular(*bad)


def test_random_regular_reproducible():
    a, b = random_regular(30, 3, 5), random_regular(30, 3, 5)
    assert a.edges == b.edges
    assert random_regular(30, 3, 6).edges != a.edges


def test_generation_failure_reported(monkeypatch):
    import asympexp.generators as g

    monkeypatch.setattr(g, "MAX_REJECTIONS", 0)
    with pytest.raises(GenerationFailed):
        g.random_regular(10, 3, 0)


def test_glue_example():
    G = glue_example(complete(4), path(2))
    assert G.n == 6 and len(G.edges) == 8
    # boundary of the small part is the attach vertex of the base
    assert r_boundary(G, [4, 5], 1).tolist() == [0]
    assert np.array_equal(glue_example(path(2), path(2), 1, 0).dist, path(4).dist)
    with pytest.raises(ValueError):
        glue_example(complete(3), path(2), 5, 0)


def test_glued_sequence():
    S, parts = glued_sequence([16, 36, 64], seed=3)
    assert [f for _, f in parts] == [4, 6, 8]
    assert S.sizes.tolist() == [20, 42, 72]
    ratios = [f / x for x, f in parts]
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    # attach edge joins index 0 of both parts
    assert S.pieces[0].dist[0, 16] == 1
    with pytest.raises(ValueError):
        glued_sequence([16, 36], small_sizes=[6, 4])


def test_small_size_is_ceiling_sqrt():
    assert [small_size(n) for n in (1, 2, 4, 5, 16, 17, 196)] == [1, 2, 2, 3, 4, 5, 14]


def test_interleaved_counterexample():
    X, Y, m = interleaved_counterexample(3, seed=1)
    assert len(Y) == 6
    assert [Y.pieces[2 * k].n for k in range(3)] == [1, 2, 3]
    X3 = X.pieces[2]
    nw = Y.pieces[5].n
    assert X3.dist[:nw, nw:].min() == 6
    assert np.array_equal(np.sort(m.image), np.arange(Y.total))
    assert len(interleaved_counterexample(2)[1]) == 4


def test_family_sequence_and_spec():
    S = family_sequence("cycle", [8, 16, 24])
    assert S.sizes.tolist() == [8, 16, 24]
    assert GeneratorSpec("cycle", {"sizes": [8]}).to_json() == {"family": "cycle", "params": {"sizes": [8]}}
    with pytest.raises(ValueError):
        GeneratorSpec("torus")
    with pytest.raises(ValueError):
        family_sequence("hypercube", [6])


@settings(max_examples=15, deadline=None)
@given(st.integers(3, 20), st.integers(0, 10_000))
def test_random_regular_properties(half, seed):
    n = 2 * half
    X = random_regular(n, 3, seed)
    assert set(degrees(X)) == {3}
    assert X.dist.tolist() == np.array(oracles.bfs_dist(n, X.edges), dtype=float).tolist()
    assert random_regular(n, 3, seed).edges == X.edges
