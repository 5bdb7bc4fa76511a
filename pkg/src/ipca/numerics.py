"""Dense symmetric linear algebra used by every estimator.

Matrices are plain ``numpy`` float64 arrays.  Functions that accept a
symmetric matrix symmetrize their input as ``(A + A.T) / 2`` first, so
callers may pass matrices carrying round-off asymmetry.
"""
from typing import NamedTuple

import numpy as np

from .errors import InvalidInput, NotPositiveDefinite, ShapeError

# smallest eigenvalue <= PD_RTOL * largest counts as not positive definite
PD_RTOL = 1e-12


class EigenPairs(NamedTuple):
    """Eigenvalues sorted descending with matching orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray


def as_symmetric(A):
    """Return ``(A + A.T) / 2`` as a float64 array, validating shape."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ShapeError(f"expected a non-empty square matrix, got shape {A.shape}")
    return (A + A.T) / 2.0


def _check_finite(A):
    if not np.all(np.isfinite(A)):
        raise InvalidInput("matrix contains non-finite entries")


def fix_signs(vectors):
    """Flip columns so the entry of largest magnitude is non-negative.

    Ties are broken by the lowest row index (``argmax`` returns the first
    maximiser).
    """
    vectors = np.array(vectors, dtype=np.float64, copy=True)
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eigendecompose(A):
    """Eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    A : array_like, shape (d, d)

    Returns
    -------
    EigenPairs
        ``values`` sorted non-increasing and ``vectors`` with the sign
        convention of :func:`fix_signs`.  Repeated eigenvalues get an
        arbitrary orthonormal basis of their eigenspace.
    """
    A = as_symmetric(A)
    _check_finite(A)
    values, vectors = np.linalg.eigh(A)
    order = np.arange(values.size)[::-1]
    return EigenPairs(values[order], fix_signs(vectors[:, order]))


def _spd_eig(A):
    A = as_symmetric(A)
    _check_finite(A)
    values, vectors = np.linalg.eigh(A)
    top = values[-1]
    if top <= 0 or values[0] <= PD_RTOL * top:
        raise NotPositiveDefinite(
            f"matrix is not positive definite (eigenvalue range [{values[0]:.3e}, {top:.3e}])"
        )
    return values, vectors


def is_spd(A):
    try:
        _spd_eig(A)
    except (NotPositiveDefinite, InvalidInput):
        return False
    return True


def spd_function(A, func):
    """Apply ``func`` to the spectrum of a symmetric positive definite matrix."""
    values, vectors = _spd_eig(A)
    out = (vectors * func(values)) @ vectors.T
    return (out + out.T) / 2.0


def spd_inverse(A):
    return spd_function(A, np.reciprocal)


def spd_sqrt(A):
    return spd_function(A, np.sqrt)


def spd_logdet(A):
    values, _ = _spd_eig(A)
    return float(np.sum(np.log(values)))


def cholesky_lower(A):
    """Lower-triangular ``L`` with ``L @ L.T == A``."""
    A = as_symmetric(A)
    _spd_eig(A)
    return np.linalg.cholesky(A)


def frobenius_norm_sq(A):
    A = np.asarray(A, dtype=np.float64)
    _check_finite(A)
    return float(np.sum(A * A))


def l1_off(A):
    """Sum of absolute off-diagonal entries."""
    A = np.asarray(A, dtype=np.float64)
    return float(np.sum(np.abs(A)) - np.sum(np.abs(np.diag(A))))
