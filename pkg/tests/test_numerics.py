import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ipca.errors import InvalidInput, NotPositiveDefinite, ShapeError
from ipca.numerics import (
    cholesky_lower,
    fix_signs,
    frobenius_norm_sq,
    is_spd,
    spd_inverse,
    spd_sqrt,
    sym_eigendecompose,
)


def random_spd(rng, p, ridge=0.5):
    A = rng.standard_normal((p, p))
    return A @ A.T + ridge * np.eye(p)


def test_identity_eigendecomposition():
    vals, vecs = sym_eigendecompose(np.eye(3))
    assert np.array_equal(vals, np.ones(3))
    assert np.allclose(vecs @ vecs.T, np.eye(3), atol=1e-12)


def test_diagonal_eigendecomposition():
    vals, vecs = sym_eigendecompose(np.diag([1.0, 3.0]))
    assert np.allclose(vals, [3.0, 1.0])
    assert np.allclose(vecs, [[0.0, 1.0], [1.0, 0.0]])


def test_reconstruction_and_orthonormality(rng):
    A = rng.standard_normal((50, 50))
    A = (A + A.T) / 2
    vals, vecs = sym_eigendecompose(A)
    assert np.linalg.norm((vecs * vals) @ vecs.T - A) <= 1e-10 * max(1.0, np.linalg.norm(A))
    assert np.max(np.abs(vecs.T @ vecs - np.eye(50))) < 1e-10
    assert np.all(np.diff(vals) <= 0)


def test_sign_convention(rng):
    A = rng.standard_normal((8, 8))
    _, vecs = sym_eigendecompose(A + A.T)
    idx = np.argmax(np.abs(vecs), axis=0)
    assert np.all(vecs[idx, np.arange(8)] >= 0)


def test_fix_signs_ties_use_lowest_index():
    v = np.array([[-1.0], [1.0]]) / np.sqrt(2)
    assert fix_signs(v)[0, 0] > 0


def test_eigendecomposition_is_deterministic(rng):
    A = rng.standard_normal((30, 30))
    a, b = sym_eigendecompose(A + A.T), sym_eigendecompose(A + A.T)
    assert np.array_equal(a.values, b.values) and np.array_equal(a.vectors, b.vectors)


def test_non_finite_rejected():
    with pytest.raises(InvalidInput):
        sym_eigendecompose(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_non_square_rejected():
    with pytest.raises(ShapeError):
        sym_eigendecompose(np.ones((2, 3)))


def test_inverse_examples(rng):
    assert np.allclose(spd_inverse(np.eye(4)), np.eye(4))
    assert np.allclose(spd_inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    A = random_spd(rng, 20)
    assert np.max(np.abs(A @ spd_inverse(A) - np.eye(20))) < 1e-8


def test_inverse_spectrum_is_reciprocal(rng):
    A = random_spd(rng, 12)
    vals = sym_eigendecompose(A).values
    inv_vals = sym_eigendecompose(spd_inverse(A)).values
    assert np.all(vals > 0)
    assert np.allclose(np.sort(inv_vals), np.sort(1.0 / vals), rtol=1e-8)


def test_not_positive_definite():
    with pytest.raises(NotPositiveDefinite):
        spd_inverse(np.diag([1.0, 0.0]))
    with pytest.raises(NotPositiveDefinite):
        spd_sqrt(np.diag([1.0, -1.0]))
    with pytest.raises(NotPositiveDefinite):
        cholesky_lower(np.diag([1.0, 1e-13]))
    assert not is_spd(np.diag([1.0, 1e-13]))


def test_sqrt_examples(rng):
    assert np.allclose(spd_sqrt(np.eye(3)), np.eye(3))
    assert np.allclose(spd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    A = random_spd(rng, 15)
    R = spd_sqrt(A)
    assert np.linalg.norm(R @ R - A) <= 1e-8 * np.linalg.norm(A)
    F = spd_sqrt(R)
    assert np.linalg.norm(F @ F @ F @ F - A) <= 1e-6 * np.linalg.norm(A)


def test_frobenius_examples():
    assert frobenius_norm_sq(np.zeros((3, 3))) == 0
    assert frobenius_norm_sq(np.eye(5)) == 5
    assert frobenius_norm_sq(np.array([[1.0, 2.0], [2.0, 1.0]])) == 10


def test_cholesky_examples(rng):
    assert np.allclose(cholesky_lower(np.eye(3)), np.eye(3))
    assert np.allclose(cholesky_lower(np.diag([4.0, 1.0])), np.diag([2.0, 1.0]))
    A = random_spd(rng, 10)
    L = cholesky_lower(A)
    assert np.allclose(L, np.tril(L))
    assert np.linalg.norm(L @ L.T - A) <= 1e-10 * np.linalg.norm(A)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(-10, 10)))
def test_eigendecomposition_property(M):
    A = (M + M.T) / 2
    vals, vecs = sym_eigendecompose(A)
    assert np.linalg.norm((vecs * vals) @ vecs.T - A) <= 1e-10 * max(1.0, np.linalg.norm(A))
    assert np.max(np.abs(vecs.T @ vecs - np.eye(6))) < 1e-10
    assert np.all(np.diff(vals) <= 0)
