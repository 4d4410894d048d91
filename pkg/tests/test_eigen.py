import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from polykin.eigen import jacobi_eigh
from polykin.sampling import make_rng, random_rotations


def test_diagonal_input():
    w, P = jacobi_eigh(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_array_equal(w, [1.0, 2.0, 3.0])
    np.testing.assert_allclose(np.abs(P), np.eye(3)[:, [1, 2, 0]], atol=0)


def test_matches_lapack_batch():
    rng = make_rng(1)
    a = rng.standard_normal((500, 3, 3))
    a = a + np.swapaxes(a, -1, -2)
    w, P = jacobi_eigh(a)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(a), atol=1e-12)
    recon = P @ (w[..., None] * np.swapaxes(P, -1, -2))
    np.testing.assert_allclose(recon, a, atol=1e-12)
    np.testing.assert_allclose(np.swapaxes(P, -1, -2) @ P, np.broadcast_to(np.eye(3), a.shape), atol=1e-13)


def test_degenerate_eigenvalues():
    Q = random_rotations(make_rng(2), 1)[0]
    a = Q.T @ np.diag([2.0, 2.0, 2.0 + 1e-12]) @ Q
    w, P = jacobi_eigh(a)
    np.testing.assert_allclose(w, [2.0, 2.0, 2.0 + 1e-12], atol=1e-13)
    np.testing.assert_allclose(P @ np.diag(w) @ P.T, a, atol=1e-13)


def test_isotropic_is_exact():
    w, _ = jacobi_eigh(1.7 * np.eye(3))
    np.testing.assert_array_equal(w, [1.7, 1.7, 1.7])


@given(arrays(np.float64, (3, 3), elements=st.floats(-10, 10)))
def test_property_reconstruction(m):
    a = m + m.T
    w, P = jacobi_eigh(a)
    scale = max(1.0, np.abs(a).max())
    assert np.all(np.diff(w) >= 0)
    np.testing.assert_allclose(P @ np.diag(w) @ P.T, a, atol=1e-12 * scale)
    assert np.trace(a) == pytest.approx(w.sum(), abs=1e-12 * scale)
