"""Simulation designs, baseline estimators and the subspace recovery metric.

All generators are deterministic given their seed.  Scenario generation
derives one independent random stream per (operation, view) from the
scenario seed, so changing one view's settings leaves the others' draws
untouched.
"""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._rng import substream
from .dataset import MultiViewDataset
from .errors import InvalidInput, ShapeError
from .estimators import concatenated_pca_sigma
from .numerics import as_symmetric, is_spd, spd_inverse, spd_sqrt, sym_eigendecompose


# ---------------------------------------------------------------------------
# covariance generators


def ar_toeplitz(p, rho):
    """Autoregressive Toeplitz covariance with entries ``rho**|i-j|``."""
    if not abs(rho) < 1:
        raise InvalidInput(f"|rho| must be < 1, got {rho}")
    if p < 1:
        raise InvalidInput(f"p must be positive, got {p}")
    idx = np.arange(p)
    return float(rho) ** np.abs(idx[:, None] - idx[None, :])


def _block_sizes(p, B):
    base, extra = divmod(p, B)
    return [base + (1 if b < extra else 0) for b in range(B)]


def block_diagonal_cov(p, B, q):
    """``B`` near-equal diagonal blocks with unit diagonal and off-diagonal ``q``."""
    if not 1 <= B <= p:
        raise InvalidInput(f"need 1 <= B <= p, got B={B}, p={p}")
    if not 0 <= q < 1:
        raise InvalidInput(f"q must lie in [0, 1), got {q}")
    out = np.zeros((p, p))
    start = 0
    for size in _block_sizes(p, B):
        out[start : start + size, start : start + size] = q
        start += size
    np.fill_diagonal(out, 1.0)
    return out


def _random_orthogonal(p, rng):
    Q, R = np.linalg.qr(rng.standard_normal((p, p)))
    return Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))


def _spikes(D, rng, eig_low, eig_high):
    return np.sort(rng.uniform(eig_low, eig_high, size=D))[::-1]


def spiked_cov(p, D, seed, eig_low=5.0, eig_high=75.0):
    """Spiked covariance ``U diag(d) U^T`` with a random orthogonal ``U``.

    ``d_1..d_D ~ Unif(eig_low, eig_high)`` (sorted descending), the other
    eigenvalues are 1.

    Returns
    -------
    sigma : ndarray, shape (p, p)
    basis : ndarray, shape (p, D)
        Orthonormal basis of the spiked eigenspace.
    """
    if not 1 <= D < p:
        raise InvalidInput(f"need 1 <= D < p, got D={D}, p={p}")
    if not 1 < eig_low <= eig_high:
        raise InvalidInput("spike range must satisfy 1 < eig_low <= eig_high")
    rng = np.random.default_rng(seed)
    U = _random_orthogonal(p, rng)
    d = np.ones(p)
    d[:D] = _spikes(D, rng, eig_low, eig_high)
    sigma = (U * d) @ U.T
    return (sigma + sigma.T) / 2.0, U[:, :D].copy()


@dataclass(frozen=True)
class GroundTruth:
    sigma_true: np.ndarray
    delta_true: tuple
    joint_basis: np.ndarray
    cluster_labels: Optional[np.ndarray] = None


def _cluster_centroids(c, d):
    if d >= c - 1:
        V = np.eye(c) - 1.0 / c
        V = np.linalg.svd(V)[0][:, : c - 1] * np.linalg.svd(V)[1][: c - 1]
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        return np.hstack([V, np.zeros((c, d - (c - 1)))])
    if d == 1:
        return np.linspace(-1.0, 1.0, c)[:, None]
    ang = 2.0 * np.pi * np.arange(c) / c
    return np.hstack([np.cos(ang)[:, None], np.sin(ang)[:, None], np.zeros((c, d - 2))])


def spiked_cluster_sigma(n, n_clusters=3, d=2, seed=0, eig_low=5.0, eig_high=75.0, jitter=0.1):
    """Spiked row covariance whose top ``d`` factors form clusters.

    Samples are assigned to clusters round-robin.  Each sample's factor
    coordinates are its cluster centroid (unit-norm vertices of a regular
    simplex or polygon) plus Gaussian jitter; the centered coordinates are
    orthonormalized to give the spiked eigenvectors.
    """
    if n_clusters < 1 or d < 1 or n < 2 * n_clusters or d >= n:
        raise InvalidInput(f"invalid cluster design n={n}, n_clusters={n_clusters}, d={d}")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % n_clusters
    coords = _cluster_centroids(n_clusters, d)[labels] + jitter * rng.standard_normal((n, d))
    coords -= coords.mean(axis=0)
    Q, _ = np.linalg.qr(coords)
    spikes = _spikes(d, rng, eig_low, eig_high)
    sigma = np.eye(n) + (Q * (spikes - 1.0)) @ Q.T
    sigma = (sigma + sigma.T) / 2.0
    return sigma, GroundTruth(sigma, (), Q, labels)


def block_spiked_sigma(n, B, spikes=(25.0, 12.5)):
    """Low-rank block covariance ``I + sum_i (D_i - 1) u_i u_i^T``.

    ``u_i`` is the normalized indicator of block ``i`` of a ``B``-block
    partition, so ``Sigma`` is block diagonal with ``B`` blocks and its top
    eigenvectors are block indicators.
    """
    spikes = np.asarray(spikes, dtype=np.float64)
    if not 1 <= spikes.size <= B <= n or np.any(spikes <= 1):
        raise InvalidInput(f"invalid block design n={n}, B={B}, spikes={spikes.tolist()}")
    U = np.zeros((n, spikes.size))
    start = 0
    for i, size in enumerate(_block_sizes(n, B)[: spikes.size]):
        U[start : start + size, i] = 1.0 / math.sqrt(size)
        start += size
    return np.eye(n) + (U * (spikes - 1.0)) @ U.T, U


def sparse_banded_cov(p, bandwidth=4, v=0.3, u=0.1):
    """Correlation matrix of a banded Gaussian graph.

    The precision has entries ``v`` within ``bandwidth`` of the diagonal and
    diagonal ``|lambda_min| + 0.1 + u``; the returned matrix is the
    correlation matrix of its inverse.
    """
    if bandwidth < 0 or p < 1:
        raise InvalidInput(f"invalid band design p={p}, bandwidth={bandwidth}")
    idx = np.arange(p)
    band = np.abs(idx[:, None] - idx[None, :])
    omega = np.where((band > 0) & (band <= bandwidth), v, 0.0)
    np.fill_diagonal(omega, abs(np.linalg.eigvalsh(omega)[0]) + 0.1 + u)
    cov = spd_inverse(omega)
    s = np.sqrt(np.diag(cov))
    out = cov / np.outer(s, s)
    np.fill_diagonal(out, 1.0)
    return (out + out.T) / 2.0


# ---------------------------------------------------------------------------
# sampling


def sample_matrix_normal(sigma, delta, seed):
    """Draw ``X = Sigma^{1/2} Omega Delta^{1/2}`` with iid standard normal
    ``Omega`` from ``numpy.random.default_rng(seed)``.
    """
    sigma = as_symmetric(sigma)
    delta = as_symmetric(delta)
    rng = np.random.default_rng(seed)
    omega = rng.standard_normal((sigma.shape[0], delta.shape[0]))
    return spd_sqrt(sigma) @ omega @ spd_sqrt(delta)


def add_laplace_noise(X, b, seed):
    """``X + E`` with iid Laplace(0, b) entries drawn by inverse CDF."""
    X = np.asarray(X, dtype=np.float64)
    if not b >= 0:
        raise InvalidInput(f"b must be non-negative, got {b}")
    if b == 0:
        return X.copy()
    rng = np.random.default_rng(seed)
    u = rng.uniform(-0.5, 0.5, size=X.shape)
    return X - b * np.sign(u) * np.log1p(-2.0 * np.abs(u))


_FACTOR_DISTS = ("normal", "uniform", "exponential", "discrete")


def _factors(rng, shape, dist):
    if dist == "normal":
        return rng.standard_normal(shape)
    if dist == "uniform":
        return rng.uniform(0.0, 1.0, size=shape)
    if dist == "exponential":
        return rng.exponential(1.0, size=shape)
    return rng.integers(-2, 3, size=shape).astype(np.float64)


def simulate_jive(n, p_k, r, r_k, sigma, factor_dist="normal", seed=0):
    """Joint-plus-individual low-rank data ``X_k = U V_k + U_k W_k + E_k``.

    Factor entries are iid from ``factor_dist`` (one of ``normal``,
    ``uniform``, ``exponential``, ``discrete``); noise is ``N(0, sigma^2)``.
    The ground-truth joint covariance is ``J J^T`` with
    ``J = [U V_1, ..., U V_K]``.
    """
    p_k, r_k = list(p_k), list(r_k)
    if r < 1 or len(r_k) != len(p_k) or any(x < 0 for x in r_k) or not sigma >= 0:
        raise InvalidInput("need r >= 1, one r_k >= 0 per view and sigma >= 0")
    if factor_dist not in _FACTOR_DISTS:
        raise InvalidInput(f"factor_dist must be one of {_FACTOR_DISTS}, got {factor_dist!r}")
    if r > n:
        raise InvalidInput(f"joint rank r={r} exceeds n={n}")
    U = _factors(substream(seed, "jive", "U"), (n, r), factor_dist)
    views, joint = [], []
    for k, (pk, rk) in enumerate(zip(p_k, r_k)):
        J = U @ _factors(substream(seed, "jive", "V", k), (r, pk), factor_dist)
        A = _factors(substream(seed, "jive", "Uk", k), (n, rk), factor_dist) @ _factors(
            substream(seed, "jive", "Wk", k), (rk, pk), factor_dist
        )
        E = sigma * substream(seed, "jive", "E", k).standard_normal((n, pk))
        views.append(J + A + E)
        joint.append(J)
    Jt = np.hstack(joint)
    sig = Jt @ Jt.T
    sig = (sig + sig.T) / 2.0
    basis = sym_eigendecompose(sig).vectors[:, :r]
    return MultiViewDataset(views), GroundTruth(sig, (), basis)


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class SpikedClusters:
    n_clusters: int = 3
    d: int = 2
    eig_low: float = 5.0
    eig_high: float = 75.0


@dataclass(frozen=True)
class Spiked:
    D: int
    eig_low: float = 5.0
    eig_high: float = 75.0


@dataclass(frozen=True)
class BlockDiagonal:
    B: int
    q: float = 0.5


@dataclass(frozen=True)
class BlockSpiked:
    B: int
    spikes: tuple = (25.0, 12.5)


@dataclass(frozen=True)
class ArToeplitz:
    rho: float = 0.9


@dataclass(frozen=True)
class SparseBanded:
    bandwidth: int = 4


@dataclass(frozen=True)
class Laplace:
    b: float


@dataclass(frozen=True)
class SimScenario:
    """A Kronecker-model simulation design.

    With ``obscure_joint`` every ``Delta_k`` is rescaled so that
    ``||Delta_k||_2 = 1.5 ||Sigma||_2``.
    """

    n: int
    p_k: tuple
    sigma_spec: object
    delta_specs: tuple
    noise: Optional[Laplace] = None
    seed: int = 0
    obscure_joint: bool = False

    def __post_init__(self):
        object.__setattr__(self, "p_k", tuple(int(x) for x in self.p_k))
        object.__setattr__(self, "delta_specs", tuple(self.delta_specs))
        if len(self.p_k) != len(self.delta_specs) or not self.p_k:
            raise InvalidInput("need one delta spec per view")


OBSCURE_FACTOR = 1.5


def _make_sigma(spec, n, seed):
    rng = substream(seed, "sigma")
    if isinstance(spec, SpikedClusters):
        sig, truth = spiked_cluster_sigma(n, spec.n_clusters, spec.d, rng, spec.eig_low, spec.eig_high)
        return sig, truth.joint_basis, truth.cluster_labels
    if isinstance(spec, Spiked):
        sig, basis = spiked_cov(n, spec.D, rng, spec.eig_low, spec.eig_high)
        return sig, basis, None
    if isinstance(spec, BlockDiagonal):
        sig = block_diagonal_cov(n, spec.B, spec.q)
        return sig, sym_eigendecompose(sig).vectors[:, : spec.B], None
    if isinstance(spec, BlockSpiked):
        sig, basis = block_spiked_sigma(n, spec.B, spec.spikes)
        return sig, basis, None
    raise InvalidInput(f"unsupported sigma spec {spec!r}")


def _make_delta(spec, p, seed, k):
    rng = substream(seed, "delta", k)
    if isinstance(spec, ArToeplitz):
        return ar_toeplitz(p, spec.rho)
    if isinstance(spec, BlockDiagonal):
        return block_diagonal_cov(p, spec.B, spec.q)
    if isinstance(spec, Spiked):
        return spiked_cov(p, spec.D, rng, spec.eig_low, spec.eig_high)[0]
    if isinstance(spec, SparseBanded):
        return sparse_banded_cov(p, spec.bandwidth)
    raise InvalidInput(f"unsupported delta spec {spec!r}")


def simulate_scenario(s):
    """Generate data and ground truth for a :class:`SimScenario`."""
    sigma, basis, labels = _make_sigma(s.sigma_spec, s.n, s.seed)
    sig_norm = float(np.linalg.eigvalsh(sigma)[-1])
    deltas, views = [], []
    sigma_half = spd_sqrt(sigma)
    for k, (pk, spec) in enumerate(zip(s.p_k, s.delta_specs)):
        delta = _make_delta(spec, pk, s.seed, k)
        if s.obscure_joint:
            delta = delta * (OBSCURE_FACTOR * sig_norm / float(np.linalg.eigvalsh(delta)[-1]))
        if not is_spd(delta):
            raise InvalidInput(f"generated Delta_{k} is not positive definite")
        omega = substream(s.seed, "omega", k).standard_normal((s.n, pk))
        X = sigma_half @ omega @ spd_sqrt(delta)
        if s.noise is not None:
            X = add_laplace_noise(X, s.noise.b, substream(s.seed, "noise", k))
        deltas.append(delta)
        views.append(X)
    return MultiViewDataset(views), GroundTruth(sigma, tuple(deltas), basis, labels)


def base_scenario(seed=0, n=150, p_k=(300, 500, 400), laplace_b=None, obscure_joint=True):
    """Three views: AR(0.9) Toeplitz, low-rank spiked and 5-block column
    covariances around a clustered spiked row covariance (``d = 2``)."""
    return SimScenario(
        n,
        p_k,
        SpikedClusters(3, 2),
        (ArToeplitz(0.9), Spiked(3), BlockDiagonal(5, 0.5)),
        None if laplace_b is None else Laplace(laplace_b),
        seed,
        obscure_joint,
    )


def desk_scenario(seed=0, laplace_b=None):
    """:func:`base_scenario` at ``n = 50``, ``p_k = (60, 100, 80)``."""
    return base_scenario(seed, 50, (60, 100, 80), laplace_b)


def sparse_scenario(seed=0, n=50, p_k=(50, 100), B=5, spikes=(25.0, 12.5)):
    """Low-rank block row covariance with banded and block column covariances."""
    return SimScenario(
        n, p_k, BlockSpiked(B, tuple(spikes)), (SparseBanded(4), BlockDiagonal(5, 0.5)), None, seed
    )


# ---------------------------------------------------------------------------
# metric and baselines


def _check_orthonormal(U, name):
    U = np.asarray(U, dtype=np.float64)
    if U.ndim != 2 or U.shape[1] > U.shape[0] or U.shape[1] < 1:
        raise ShapeError(f"{name} must be n x d with 1 <= d <= n, got {U.shape}")
    if np.max(np.abs(U.T @ U - np.eye(U.shape[1]))) > 1e-8:
        raise InvalidInput(f"{name} is not orthonormal")
    return U


def subspace_recovery_error(U_true, U_hat):
    """Projector distance ``(1/d) ||U_hat U_hat^T - U U^T||_F^2`` in ``[0, 2]``."""
    U = _check_orthonormal(U_true, "U_true")
    V = _check_orthonormal(U_hat, "U_hat")
    if U.shape != V.shape:
        raise ShapeError(f"shape mismatch {U.shape} vs {V.shape}")
    d = U.shape[1]
    # ||P - Q||_F^2 = 2d - 2 ||U^T V||_F^2
    cross = U.T @ V
    val = (2.0 * d - 2.0 * float(np.sum(cross * cross))) / d
    return min(2.0, max(0.0, val))


def _top(A, d):
    if not 1 <= d <= A.shape[0]:
        raise ShapeError(f"d={d} outside [1, {A.shape[0]}]")
    return sym_eigendecompose(A).vectors[:, :d]


def baseline_individual_pca(data, k, d):
    """Top-``d`` left singular vectors of the centered view ``k``."""
    if not 0 <= k < data.K:
        raise ShapeError(f"view index {k} out of range for K={data.K}")
    X = data.views[k] - data.views[k].mean(axis=0)
    return _top(X @ X.T, d)


def baseline_concatenated_pca(data, d):
    """Top-``d`` eigenvectors of ``(1/p) Xc Xc^T`` for the concatenated data."""
    return _top(concatenated_pca_sigma(data), d)


def baseline_mfa(data, d):
    """Concatenated PCA after dividing each centered view by its largest
    singular value."""
    views = []
    for X in data.views:
        Xc = X - X.mean(axis=0)
        s = np.linalg.norm(Xc, 2)
        views.append(Xc / s if s > 0 else Xc)
    return _top(concatenated_pca_sigma(MultiViewDataset(views)), d)
