"""Integrated principal components: scores, loadings and variance explained."""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScale, InvalidInput, ShapeError
from .numerics import sym_eigendecompose


@dataclass(frozen=True)
class IpcaModel:
    """Eigenvectors of the fitted covariances.

    ``scores`` (``n x n``) holds the eigenvectors of ``Sigma_hat`` and
    ``loadings[k]`` (``p_k x p_k``) those of ``Delta_hat_k``, each ordered
    by descending eigenvalue.
    """

    scores: np.ndarray
    sigma_eigenvalues: np.ndarray
    loadings: tuple
    delta_eigenvalues: tuple
    data: object = None

    @property
    def n(self):
        return self.scores.shape[0]

    @property
    def K(self):
        return len(self.loadings)


def extract(fit):
    """Eigendecompose ``Sigma_hat`` and every ``Delta_hat_k`` of a fit."""
    sig = sym_eigendecompose(fit.sigma_hat)
    dels = [sym_eigendecompose(d) for d in fit.delta_hat]
    return IpcaModel(
        sig.vectors,
        sig.values,
        tuple(d.vectors for d in dels),
        tuple(d.values for d in dels),
        fit.data,
    )


def _view(data, model, k):
    if data is None:
        raise InvalidInput("no centered data available; pass the data the fit was computed on")
    if not data.centered:
        raise InvalidInput("variance explained requires column-centered data (use the fit's data)")
    if not isinstance(k, (int, np.integer)) or not 0 <= k < data.K:
        raise ShapeError(f"view index {k!r} out of range for K={data.K}")
    X = data.views[k]
    if X.shape[0] != model.n or X.shape[1] != model.loadings[k].shape[0]:
        raise ShapeError("data does not match the model dimensions")
    return X


def pve(data, model, k, m):
    """Cumulative proportion of variance of view ``k`` explained by the top
    ``m`` components: ``||U_m^T X_k V_km||_F^2 / ||X_k||_F^2``.

    Parameters
    ----------
    data : MultiViewDataset or None
        Centered data; ``None`` uses the data recorded on the model.
    m : int
        ``0 <= m <= min(n, p_k)``.
    """
    data = model.data if data is None else data
    X = _view(data, model, k)
    n, pk = X.shape
    if not isinstance(m, (int, np.integer)) or not 0 <= m <= min(n, pk):
        raise ShapeError(f"m={m!r} outside [0, {min(n, pk)}]")
    total = float(np.sum(X * X))
    if total <= 0:
        raise DegenerateScale(f"view {k} is identically zero")
    if m == 0:
        return 0.0
    core = model.scores[:, :m].T @ X @ model.loadings[k][:, :m]
    return min(1.0, float(np.sum(core * core)) / total)


def pve_curve(data, model, k):
    """PVE for ``m = 0..min(n, p_k)`` as one array."""
    data = model.data if data is None else data
    X = _view(data, model, k)
    total = float(np.sum(X * X))
    if total <= 0:
        raise DegenerateScale(f"view {k} is identically zero")
    M = min(X.shape)
    core = model.scores[:, :M].T @ X @ model.loadings[k][:, :M]
    sq = core * core
    # ||C[:m, :m]||^2 grows by the new row and column at each step
    inc = np.array([sq[m, : m + 1].sum() + sq[:m, m].sum() for m in range(M)])
    return np.minimum(1.0, np.concatenate([[0.0], np.cumsum(inc)]) / total)


def mpve(data, model, k, m):
    """Marginal variance explained: ``pve(m) - pve(m - 1)`` for ``m >= 1``."""
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ShapeError(f"m must be >= 1, got {m!r}")
    return pve(data, model, k, m) - pve(data, model, k, m - 1)


def top_scores(model, m):
    """First ``m`` iPC score vectors (``n x m``)."""
    if not isinstance(m, (int, np.integer)) or not 1 <= m <= model.n:
        raise ShapeError(f"m={m!r} outside [1, {model.n}]")
    return model.scores[:, :m].copy()
