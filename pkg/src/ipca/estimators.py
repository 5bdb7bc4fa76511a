"""Penalized Kronecker covariance estimators (Flip-Flop solvers).

Each view ``X_k`` (``n x p_k``) is modelled as matrix-variate normal with
row covariance ``Sigma`` shared by all views and a view-specific column
covariance ``Delta_k``.  The solvers alternate closed-form or graphical
lasso updates of ``Sigma`` and the ``Delta_k`` and record the penalized
log-likelihood after every half-sweep.
"""
import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import glasso as _glasso
from .dataset import MultiViewDataset, center_columns
from .errors import (
    DegenerateScale,
    InvalidInput,
    InvalidPenalty,
    IpcaError,
    NoConvergence,
    NonexistentMLE,
    NotPositiveDefinite,
    ShapeError,
)
from .numerics import (
    as_symmetric,
    frobenius_norm_sq,
    l1_off,
    spd_inverse,
    spd_logdet,
    sym_eigendecompose,
)

RANK_RTOL = 1e-10
GLASSO_ACCEPT = 100.0


class Family(str, enum.Enum):
    NONE = "none"
    ADDITIVE_FROBENIUS = "add-frob"
    MULTIPLICATIVE_FROBENIUS = "mult-frob"
    ADDITIVE_L1_COV = "l1-cov"
    ADDITIVE_L1_CORR = "l1-corr"


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty family and its parameters.

    The multiplicative Frobenius family takes ``K`` parameters (no
    ``lambda_sigma``), the additive families take ``K + 1`` and ``NONE``
    takes none.  ``penalize_diagonal`` applies to the L1 covariance family
    only: the default penalizes the whole precision matrix, which keeps the
    scale of ``Sigma`` against ``Delta_k`` from drifting; ``False`` penalizes
    off-diagonal entries only.
    """

    family: Family
    lambda_sigma: Optional[float] = None
    lambda_k: tuple = ()
    penalize_diagonal: bool = True

    def __post_init__(self):
        try:
            fam = Family(self.family)
        except ValueError:
            raise InvalidPenalty(f"unknown penalty family {self.family!r}") from None
        object.__setattr__(self, "family", fam)
        lam_k = tuple(float(x) for x in self.lambda_k)
        object.__setattr__(self, "lambda_k", lam_k)
        if fam is Family.NONE:
            if self.lambda_sigma is not None or lam_k:
                raise InvalidPenalty("the unpenalized family takes no parameters")
            return
        if fam is Family.MULTIPLICATIVE_FROBENIUS:
            if self.lambda_sigma is not None:
                raise InvalidPenalty("the multiplicative Frobenius penalty has no lambda_sigma")
        else:
            if self.lambda_sigma is None:
                raise InvalidPenalty(f"{fam.value} requires lambda_sigma")
            object.__setattr__(self, "lambda_sigma", float(self.lambda_sigma))
        if not lam_k:
            raise InvalidPenalty(f"{fam.value} requires one lambda per view")
        values = self.values()
        if not all(math.isfinite(v) and v >= 0 for v in values):
            raise InvalidPenalty(f"penalty parameters must be finite and non-negative, got {values}")

    @property
    def K(self):
        return len(self.lambda_k)

    def values(self):
        """Parameters in tuning order: ``lambda_sigma`` (if any), then ``lambda_k``."""
        head = () if self.lambda_sigma is None else (self.lambda_sigma,)
        return head + self.lambda_k

    def with_values(self, values):
        values = tuple(values)
        if self.lambda_sigma is None:
            return PenaltySpec(self.family, None, values, self.penalize_diagonal)
        return PenaltySpec(self.family, values[0], values[1:], self.penalize_diagonal)

    @classmethod
    def make(cls, family, lambdas, K, penalize_diagonal=True):
        """Build a spec from a flat parameter list (a scalar is broadcast)."""
        fam = Family(family)
        if fam is Family.NONE:
            return cls(fam)
        n_par = K if fam is Family.MULTIPLICATIVE_FROBENIUS else K + 1
        lambdas = np.atleast_1d(np.asarray(lambdas, dtype=np.float64)).tolist()
        if len(lambdas) == 1:
            lambdas = lambdas * n_par
        if len(lambdas) != n_par:
            raise InvalidPenalty(f"{fam.value} needs {n_par} parameters for K={K}, got {len(lambdas)}")
        if fam is Family.MULTIPLICATIVE_FROBENIUS:
            return cls(fam, None, lambdas)
        return cls(fam, lambdas[0], lambdas[1:], penalize_diagonal)


@dataclass(frozen=True)
class FitOptions:
    """Solver controls.

    ``init`` is ``None`` (identity matrices) or ``(sigma0, [delta0_k])``.
    ``large_p_order=None`` selects the large-p ordering of the one-step
    correlation estimator iff ``sqrt(n) < p / sqrt(p_k)`` for every view.
    ``assume_centered`` declares the data already mean-removed (means known),
    which skips auto-centering.  ``glasso_tol`` is the KKT tolerance of each
    graphical lasso subproblem, relative to the mean diagonal of its input.
    """

    max_iter: int = 100
    rel_tol: float = 1e-6
    init: Optional[tuple] = None
    l1_onestep: bool = True
    large_p_order: Optional[bool] = None
    assume_centered: bool = False
    glasso_tol: float = 1e-6

    def __post_init__(self):
        if int(self.max_iter) < 1:
            raise InvalidInput(f"max_iter must be >= 1, got {self.max_iter}")
        if not self.rel_tol > 0:
            raise InvalidInput(f"rel_tol must be positive, got {self.rel_tol}")


@dataclass(frozen=True)
class CovarianceFit:
    """Result of a covariance fit, normalized so that ``trace(sigma_hat) == n``.

    ``normalization`` is the factor ``c`` with ``sigma_hat = c * sigma_raw``
    and ``delta_hat[k] = delta_raw[k] / c``; ``data`` is the centered data
    the fit was computed on.
    """

    sigma_hat: np.ndarray
    delta_hat: tuple
    mu_hat: tuple
    objective_trace: np.ndarray
    converged: bool
    iterations: int
    penalty: PenaltySpec
    normalization: float = 1.0
    data: Optional[MultiViewDataset] = field(default=None, repr=False, compare=False)
    options: Optional[FitOptions] = field(default=None, repr=False, compare=False)

    @property
    def ascent_expected(self):
        """Whether each half-sweep is an exact block maximization of the
        recorded objective.  The iterated correlation estimator is not."""
        if self.penalty.family is Family.ADDITIVE_L1_CORR:
            return self.options is None or self.options.l1_onestep
        return True

    @property
    def sigma_raw(self):
        return self.sigma_hat / self.normalization

    @property
    def delta_raw(self):
        return tuple(d * self.normalization for d in self.delta_hat)


# ---------------------------------------------------------------------------
# objective


def _penalty_value(penalty, sigma_inv, delta_inv, n, p):
    fam = penalty.family
    if fam is Family.NONE:
        return 0.0
    lam_k = penalty.lambda_k
    if fam is Family.MULTIPLICATIVE_FROBENIUS:
        return frobenius_norm_sq(sigma_inv) * sum(
            l * frobenius_norm_sq(d) for l, d in zip(lam_k, delta_inv)
        )
    if fam is Family.ADDITIVE_FROBENIUS:
        return penalty.lambda_sigma * frobenius_norm_sq(sigma_inv) + sum(
            l * frobenius_norm_sq(d) for l, d in zip(lam_k, delta_inv)
        )
    if fam is Family.ADDITIVE_L1_COV:
        norm = _l1_full if penalty.penalize_diagonal else l1_off
        return penalty.lambda_sigma * norm(sigma_inv) + sum(
            l * norm(d) for l, d in zip(lam_k, delta_inv)
        )
    # correlation penalty on W Theta W, weighted like the glasso subproblems
    val = p * penalty.lambda_sigma * l1_off(_correlation_precision(sigma_inv))
    for l, d in zip(lam_k, delta_inv):
        val += n * l * l1_off(_correlation_precision(d))
    return val


def _l1_full(A):
    return float(np.sum(np.abs(A)))


def _correlation_precision(theta):
    w = np.sqrt(np.diag(spd_inverse(theta)))
    return theta * np.outer(w, w)


def _check_dims(views, sigma_inv, delta_inv):
    n = views[0].shape[0]
    if sigma_inv.shape != (n, n):
        raise ShapeError(f"sigma_inv has shape {sigma_inv.shape}, expected {(n, n)}")
    if len(delta_inv) != len(views):
        raise ShapeError(f"{len(delta_inv)} delta matrices for {len(views)} views")
    for k, (d, X) in enumerate(zip(delta_inv, views)):
        if d.shape != (X.shape[1], X.shape[1]):
            raise ShapeError(f"delta_inv[{k}] has shape {d.shape}, expected {(X.shape[1],) * 2}")


def _loglik(views, sigma_inv, delta_inv, penalty):
    n = views[0].shape[0]
    p = sum(X.shape[1] for X in views)
    val = p * spd_logdet(sigma_inv)
    for X, D in zip(views, delta_inv):
        val += n * spd_logdet(D) - float(np.sum((sigma_inv @ X) * (X @ D)))
    return val - _penalty_value(penalty, sigma_inv, delta_inv, n, p)


def penalized_loglik(data, sigma_inv, delta_inv, penalty):
    """Penalized matrix-variate normal log-likelihood (up to constants).

    ``p log|Sigma^-1| + n sum_k log|Delta_k^-1|
    - sum_k tr(Sigma^-1 X_k Delta_k^-1 X_k^T) - P``, with ``P`` the penalty
    of ``penalty.family``.  The views are used as given; pass centered data.
    """
    sigma_inv = as_symmetric(sigma_inv)
    delta_inv = [as_symmetric(d) for d in delta_inv]
    _check_dims(data.views, sigma_inv, delta_inv)
    _check_penalty(penalty, data.K)
    return _loglik(data.views, sigma_inv, delta_inv, penalty)


# ---------------------------------------------------------------------------
# shared plumbing


def _check_penalty(penalty, K, positive=False):
    if penalty.family is not Family.NONE and penalty.K != K:
        raise InvalidPenalty(f"penalty has {penalty.K} view parameters, data has K={K}")
    if positive and not all(v > 0 for v in penalty.values()):
        raise InvalidPenalty(f"{penalty.family.value} requires strictly positive parameters")


def _prepare(data, options):
    if data.centered:
        return data, tuple(data.column_means)
    if options.assume_centered:
        return data, tuple(np.zeros(pk) for pk in data.p_k)
    centered = center_columns(data)
    return centered, tuple(centered.column_means)


def _initial(data, options):
    if options.init is None:
        return np.eye(data.n), [np.eye(pk) for pk in data.p_k]
    sigma0, deltas0 = options.init
    sigma0 = as_symmetric(sigma0)
    deltas0 = [as_symmetric(d) for d in deltas0]
    _check_dims(data.views, sigma0, deltas0)
    return sigma0, deltas0


def _sigma_gram(views, delta_inv):
    A = sum(X @ D @ X.T for X, D in zip(views, delta_inv))
    return (A + A.T) / 2.0


def _delta_gram(X, sigma_inv):
    A = X.T @ sigma_inv @ X
    return (A + A.T) / 2.0


def eigenvalue_map(gamma, dim, c):
    """Eigenvalues of the Frobenius-penalized block update.

    ``phi = (gamma + sqrt(gamma^2 + 8 dim c)) / (2 dim)`` maps each
    eigenvalue ``gamma`` of the Gram matrix to the corresponding eigenvalue
    of the updated covariance.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    return (gamma + np.sqrt(gamma * gamma + 8.0 * dim * c)) / (2.0 * dim)


def _regularized_eig(A, dim, c):
    # maximizer of dim*log|T| - tr(T A) - c*||T||_F^2, returned as its inverse
    vals, vecs = sym_eigendecompose(A)
    phi = eigenvalue_map(np.maximum(vals, 0.0), dim, c)
    cov = (vecs * phi) @ vecs.T
    prec = (vecs / phi) @ vecs.T
    return (cov + cov.T) / 2.0, (prec + prec.T) / 2.0


def _finalize(data, mu, sigma, deltas, trace, converged, iterations, penalty, options):
    """Normalize ``trace(Sigma) = n`` and assemble the fit."""
    c = data.n / float(np.trace(sigma))
    sig = sigma * c
    dels = tuple(d / c for d in deltas)
    for a in (sig,) + dels:
        a.flags.writeable = False
    tr = np.asarray(trace, dtype=np.float64)
    tr.flags.writeable = False
    return CovarianceFit(
        sig, dels, tuple(mu), tr, bool(converged), int(iterations), penalty, c, data, options
    )


def _converged(f_new, f_old, rel_tol):
    return abs(f_new - f_old) <= rel_tol * max(1.0, abs(f_old))


def _annotate(exc, block):
    msg = f"{block}: {exc}"
    if isinstance(exc, NoConvergence):
        return NoConvergence(msg, last_iterate=exc.last_iterate, residual=exc.residual)
    return type(exc)(msg)


# ---------------------------------------------------------------------------
# closed-form special cases


def concatenated_pca_sigma(data):
    """Row covariance assuming every ``Delta_k = I``: ``(1/p) Xc Xc^T``."""
    Xs = [v - v.mean(axis=0) for v in data.views]
    A = sum(X @ X.T for X in Xs) / data.p
    return (A + A.T) / 2.0


def delta_given_identity_sigma(data, k):
    """Column covariance of view ``k`` assuming ``Sigma = I``: ``(1/n) Xc^T Xc``."""
    if not isinstance(k, (int, np.integer)) or not 0 <= k < data.K:
        raise ShapeError(f"view index {k!r} out of range for K={data.K}")
    X = data.views[k] - data.views[k].mean(axis=0)
    A = X.T @ X / data.n
    return (A + A.T) / 2.0


def theory_lambdas(data, scale_c):
    """Rate-matched parameters for the one-step L1 correlation estimator.

    ``lambda_k = c sqrt(log(max(n, p_k)) / n)`` and
    ``lambda_sigma = c sum_k (p_k / p) sqrt(log(max(n, p_k)) / p_k)``.
    """
    if not (math.isfinite(scale_c) and scale_c > 0):
        raise InvalidPenalty(f"scale_c must be positive, got {scale_c}")
    n, p = data.n, data.p
    lam_k = [scale_c * math.sqrt(math.log(max(n, pk)) / n) for pk in data.p_k]
    lam_s = scale_c * sum((pk / p) * math.sqrt(math.log(max(n, pk)) / pk) for pk in data.p_k)
    return PenaltySpec(Family.ADDITIVE_L1_CORR, lam_s, lam_k)


# ---------------------------------------------------------------------------
# unpenalized MLE


def _check_ranks(data):
    n, p = data.n, data.p
    Xt = np.hstack(data.views)
    s = np.linalg.svd(Xt, compute_uv=False)
    if n > p or s.size < n or s[n - 1] <= RANK_RTOL * s[0]:
        raise NonexistentMLE(
            f"rank of the concatenated data is below n={n}; the MLE needs p_k <= n <= p"
        )
    for k, X in enumerate(data.views):
        sk = np.linalg.svd(X, compute_uv=False)
        pk = X.shape[1]
        if pk > n or sk[pk - 1] <= RANK_RTOL * sk[0]:
            raise NonexistentMLE(
                f"view {k} has rank below p_k={pk}; the MLE needs p_k <= n <= p"
            )


def fit_unpenalized(data, means_known, options=FitOptions(), known_means=None):
    """Unpenalized Kronecker MLE by the Flip-Flop iteration.

    Parameters
    ----------
    data : MultiViewDataset
        With ``means_known`` the views are used as given after subtracting
        ``known_means`` (zeros when omitted).
    means_known : bool
        The MLE exists only when the means are known; estimated means make
        the row covariance singular.

    Raises
    ------
    NonexistentMLE
        Means unknown, the rank conditions ``rank([X_1..X_K]) = n`` and
        ``rank(X_k) = p_k`` fail, or the iterates degenerate.  The rank
        conditions are necessary but not sufficient: with ``n < p`` and some
        ``p_k < n`` the likelihood is typically unbounded and the iterates
        lose positive definiteness within a few dozen sweeps.
    """
    if not means_known or data.centered:
        raise NonexistentMLE(
            "with column means estimated from the data the unpenalized MLEs are "
            "not positive definite and hence do not exist"
        )
    if known_means is None:
        mu = tuple(np.zeros(pk) for pk in data.p_k)
        work = data
    else:
        mu = tuple(np.asarray(m, dtype=np.float64) for m in known_means)
        if len(mu) != data.K or any(m.shape != (pk,) for m, pk in zip(mu, data.p_k)):
            raise ShapeError("known_means do not match the view widths")
        work = MultiViewDataset([v - m for v, m in zip(data.views, mu)], data.sample_ids, data.feature_names)
    _check_ranks(work)
    penalty = PenaltySpec(Family.NONE)
    views = work.views
    n, p = work.n, work.p
    sigma, deltas = _initial(work, options)
    sigma_inv = spd_inverse(sigma)
    delta_inv = [spd_inverse(d) for d in deltas]
    trace = [_loglik(views, sigma_inv, delta_inv, penalty)]
    converged, it = False, 0
    for it in range(1, options.max_iter + 1):
        f_old = trace[-1]
        try:
            sigma = _sigma_gram(views, delta_inv) / p
            sigma_inv = spd_inverse(sigma)
            trace.append(_loglik(views, sigma_inv, delta_inv, penalty))
            for k, X in enumerate(views):
                deltas[k] = _delta_gram(X, sigma_inv) / n
                delta_inv[k] = spd_inverse(deltas[k])
            trace.append(_loglik(views, sigma_inv, delta_inv, penalty))
        except NotPositiveDefinite as exc:
            raise NonexistentMLE(
                f"Flip-Flop iterates became singular at iteration {it}; the likelihood "
                f"is unbounded on this data ({exc})"
            ) from exc
        resid = np.linalg.norm(sigma - _sigma_gram(views, delta_inv) / p)
        if _converged(trace[-1], f_old, options.rel_tol) and resid <= options.rel_tol * np.linalg.norm(sigma):
            converged = True
            break
    return _finalize(work, mu, sigma, deltas, trace, converged, it, penalty, options)


# ---------------------------------------------------------------------------
# Frobenius families


def _fit_frobenius(data, penalty, options, multiplicative):
    _check_penalty(penalty, data.K, positive=True)
    work, mu = _prepare(data, options)
    views = work.views
    n, p = work.n, work.p
    lam_k = penalty.lambda_k
    sigma, deltas = _initial(work, options)
    sigma_inv = spd_inverse(sigma)
    delta_inv = [spd_inverse(d) for d in deltas]
    trace = [_loglik(views, sigma_inv, delta_inv, penalty)]
    converged, it = False, 0
    for it in range(1, options.max_iter + 1):
        f_old = trace[-1]
        if multiplicative:
            c_sigma = sum(l * frobenius_norm_sq(d) for l, d in zip(lam_k, delta_inv))
        else:
            c_sigma = penalty.lambda_sigma
        sigma, sigma_inv = _regularized_eig(_sigma_gram(views, delta_inv), p, c_sigma)
        trace.append(_loglik(views, sigma_inv, delta_inv, penalty))
        s_norm = frobenius_norm_sq(sigma_inv)
        for k, X in enumerate(views):
            c_k = lam_k[k] * s_norm if multiplicative else lam_k[k]
            deltas[k], delta_inv[k] = _regularized_eig(_delta_gram(X, sigma_inv), n, c_k)
        trace.append(_loglik(views, sigma_inv, delta_inv, penalty))
        if _converged(trace[-1], f_old, options.rel_tol):
            converged = True
            break
    return _finalize(work, mu, sigma, deltas, trace, converged, it, penalty, options)


def fit_multiplicative_frobenius(data, penalty, options=FitOptions()):
    """Flip-Flop for the multiplicative Frobenius penalty
    ``sum_k lambda_k ||Sigma^-1 (x) Delta_k^-1||_F^2``.

    The penalized objective is geodesically convex, so every positive
    definite initialization reaches the same global maximizer.  Uncentered
    data is centered first.

    Raises
    ------
    InvalidPenalty
        A parameter is not strictly positive.
    """
    if penalty.family is not Family.MULTIPLICATIVE_FROBENIUS:
        raise InvalidPenalty(f"expected mult-frob, got {penalty.family.value}")
    return _fit_frobenius(data, penalty, options, multiplicative=True)


def fit_additive_frobenius(data, penalty, options=FitOptions()):
    """Flip-Flop for ``lambda_sigma ||Sigma^-1||_F^2 + sum_k lambda_k ||Delta_k^-1||_F^2``."""
    if penalty.family is not Family.ADDITIVE_FROBENIUS:
        raise InvalidPenalty(f"expected add-frob, got {penalty.family.value}")
    return _fit_frobenius(data, penalty, options, multiplicative=False)


# ---------------------------------------------------------------------------
# L1 families


def _glasso_block(A, lam, tol, block, init=None, penalize_diagonal=False):
    # solve on the unit-mean-diagonal scale so that tol is relative
    scale = float(np.mean(np.diag(A)))
    if not scale > 0:
        scale = 1.0
    warm = None if init is None else init * scale
    try:
        theta = _glasso.glasso(A / scale, lam / scale, penalize_diagonal, tol=tol, init=warm)
        return theta / scale
    except NoConvergence as exc:
        # near-singular subproblems hit a rounding floor just above tol
        if exc.residual is not None and exc.residual <= GLASSO_ACCEPT * tol:
            return exc.last_iterate / scale
        raise _annotate(exc, block) from exc
    except IpcaError as exc:
        raise _annotate(exc, block) from exc


def fit_additive_l1_cov(data, penalty, options=FitOptions()):
    """Flip-Flop with graphical lasso updates for the additive L1 penalty
    ``lambda_sigma ||Sigma^-1||_1 + sum_k lambda_k ||Delta_k^-1||_1``
    (off-diagonal norms when ``penalty.penalize_diagonal`` is false).

    The row update solves the graphical lasso on
    ``(1/p) sum_k X_k Delta_k^-1 X_k^T`` with parameter ``lambda_sigma / p``;
    view updates use ``(1/n) X_k^T Sigma^-1 X_k`` and ``lambda_k / n``.
    Each subproblem is warm-started from the previous precision.  Solver
    failures are re-raised naming the block that failed.
    """
    if penalty.family is not Family.ADDITIVE_L1_COV:
        raise InvalidPenalty(f"expected l1-cov, got {penalty.family.value}")
    _check_penalty(penalty, data.K)
    work, mu = _prepare(data, options)
    views = work.views
    n, p = work.n, work.p
    sigma, deltas = _initial(work, options)
    sigma_inv = spd_inverse(sigma)
    delta_inv = [spd_inverse(d) for d in deltas]
    diag = penalty.penalize_diagonal
    trace = [_loglik(views, sigma_inv, delta_inv, penalty)]
    converged, it = False, 0
    for it in range(1, options.max_iter + 1):
        f_old = trace[-1]
        A = _sigma_gram(views, delta_inv) / p
        sigma_inv = _glasso_block(
            A, penalty.lambda_sigma / p, options.glasso_tol, "Sigma block", sigma_inv, diag
        )
        sigma = spd_inverse(sigma_inv)
        trace.append(_loglik(views, sigma_inv, delta_inv, penalty))
        for k, X in enumerate(views):
            Ak = _delta_gram(X, sigma_inv) / n
            delta_inv[k] = _glasso_block(
                Ak, penalty.lambda_k[k] / n, options.glasso_tol, f"Delta block (view {k})",
                delta_inv[k], diag,
            )
            deltas[k] = spd_inverse(delta_inv[k])
        trace.append(_loglik(views, sigma_inv, delta_inv, penalty))
        if _converged(trace[-1], f_old, options.rel_tol):
            converged = True
            break
    return _finalize(work, mu, sigma, deltas, trace, converged, it, penalty, options)


@dataclass
class _CorrelationScratch:
    S: np.ndarray = None
    W: np.ndarray = None
    S_rho: np.ndarray = None
    theta_rho: np.ndarray = None


def _correlation_glasso(S, lam, tol, block):
    scratch = _CorrelationScratch(S=S)
    d = np.diag(S)
    bad = np.flatnonzero(d <= 0)
    if bad.size:
        raise DegenerateScale(f"{block}: coordinate {int(bad[0])} has zero variance")
    w = np.sqrt(d)
    scratch.W = w
    S_rho = S / np.outer(w, w)
    np.fill_diagonal(S_rho, 1.0)
    scratch.S_rho = S_rho
    scratch.theta_rho = _glasso_block(S_rho, lam, tol, block)
    cov = spd_inverse(scratch.theta_rho) * np.outer(w, w)
    prec = scratch.theta_rho / np.outer(w, w)
    return (cov + cov.T) / 2.0, (prec + prec.T) / 2.0


def _large_p_default(data):
    return all(math.sqrt(data.n) < data.p / math.sqrt(pk) for pk in data.p_k)


def fit_additive_l1_corr(data, penalty, options=FitOptions()):
    """Additive L1 correlation estimator.

    Each block update converts its Gram matrix to a correlation matrix,
    applies the graphical lasso with the unscaled parameter, and maps the
    estimate back with the sample standard deviations.  Views are updated
    before ``Sigma``.  With ``options.l1_onestep`` a single pass is made;
    the large-p ordering first estimates ``Sigma`` assuming identity
    column covariances.

    Raises
    ------
    DegenerateScale
        A Gram matrix has a non-positive diagonal entry.
    """
    if penalty.family is not Family.ADDITIVE_L1_CORR:
        raise InvalidPenalty(f"expected l1-corr, got {penalty.family.value}")
    _check_penalty(penalty, data.K)
    work, mu = _prepare(data, options)
    views = work.views
    n, p = work.n, work.p
    tol = options.glasso_tol
    large_p = _large_p_default(work) if options.large_p_order is None else bool(options.large_p_order)
    sigma, deltas = _initial(work, options)
    sigma_inv = spd_inverse(sigma)
    delta_inv = [spd_inverse(d) for d in deltas]
    trace = [_loglik(views, sigma_inv, delta_inv, penalty)]

    def sigma_step():
        nonlocal sigma, sigma_inv
        S = _sigma_gram(views, delta_inv) / p
        sigma, sigma_inv = _correlation_glasso(S, penalty.lambda_sigma, tol, "Sigma block")
        trace.append(_loglik(views, sigma_inv, delta_inv, penalty))

    def delta_step():
        for k, X in enumerate(views):
            S = _delta_gram(X, sigma_inv) / n
            deltas[k], delta_inv[k] = _correlation_glasso(
                S, penalty.lambda_k[k], tol, f"Delta block (view {k})"
            )
        trace.append(_loglik(views, sigma_inv, delta_inv, penalty))

    if large_p:
        sigma_step()
    n_iter = 1 if options.l1_onestep else options.max_iter
    converged, it = options.l1_onestep, 0
    for it in range(1, n_iter + 1):
        f_old = trace[-1]
        delta_step()
        sigma_step()
        if not options.l1_onestep and _converged(trace[-1], f_old, options.rel_tol):
            converged = True
            break
    return _finalize(work, mu, sigma, deltas, trace, converged, it, penalty, options)


_FITTERS = {
    Family.MULTIPLICATIVE_FROBENIUS: fit_multiplicative_frobenius,
    Family.ADDITIVE_FROBENIUS: fit_additive_frobenius,
    Family.ADDITIVE_L1_COV: fit_additive_l1_cov,
    Family.ADDITIVE_L1_CORR: fit_additive_l1_corr,
}


def fit(data, penalty, options=FitOptions()):
    """Dispatch to the solver for ``penalty.family``.

    The unpenalized family is fitted with known (zero) means when
    ``options.assume_centered`` is set and raises otherwise.
    """
    if penalty.family is Family.NONE:
        return fit_unpenalized(data, means_known=options.assume_centered, options=options)
    return _FITTERS[penalty.family](data, penalty, options)
