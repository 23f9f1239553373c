import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from asympexp.jacobi import jacobi_eigh

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12).flatmap(lambda n: arrays(np.float64, (n, n), elements=finite)))
def test_matches_lapack(m):
    a = m + m.T
    w, v = jacobi_eigh(a)
    ref = np.linalg.eigvalsh(a)
    scale = max(1.0, np.abs(ref).max())
    assert np.all(np.diff(w) >= 0)
    assert np.abs(w - ref).max() <= 1e-10 * scale
    assert np.abs(v.T @ v - np.eye(len(a))).max() <= 1e-9
    assert np.linalg.norm(a - (v * w) @ v.T) <= 1e-8 * max(1.0, np.linalg.norm(a))


def test_projection_eigenvalues_are_zero_or_one():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(9, 4)))
    w, _ = jacobi_eigh(q @ q.T)
    assert np.abs(w - np.array([0] * 5 + [1] * 4)).max() <= 1e-8


def test_degenerate_and_trivial_inputs():
    w, v = jacobi_eigh(np.zeros((3, 3)))
    assert np.all(w == 0) and np.array_equal(v, np.eye(3))
    w, _ = jacobi_eigh(np.eye(4) * 2.5, vectors=False)
    assert np.allclose(w, 2.5)
    w, v = jacobi_eigh(np.array([[7.0]]))
    assert w.tolist() == [7.0] and v.tolist() == [[1.0]]
    with pytest.raises(ValueError):
        jacobi_eigh(np.zeros((2, 3)))


def test_deterministic():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(20, 20))
    a = m + m.T
    w1, v1 = jacobi_eigh(a)
    w2, v2 = jacobi_eigh(a)
    assert np.array_equal(w1, w2) and np.array_equal(v1, v2)
