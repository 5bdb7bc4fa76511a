"""L1-penalized Gaussian precision estimation (graphical lasso).

Solves

    minimize  -log|Theta| + tr(S Theta) + lam * ||Theta||_{1,off}

(optionally also penalizing the diagonal) by block coordinate descent over
the columns of the working covariance ``W = inv(Theta)``, with a coordinate
descent lasso for each column.  The returned estimate is certified by its
KKT residual, which makes correctness independent of the solver.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import InvalidInput, NoConvergence, NotPositiveDefinite
from .numerics import as_symmetric, l1_off, spd_inverse, spd_logdet

ZERO_THRESHOLD = 1e-10


@dataclass(frozen=True)
class GlassoProblem:
    S: np.ndarray
    lam: float
    penalize_diagonal: bool = False
    tol: float = 1e-6
    max_sweeps: int = 500
    init: Optional[np.ndarray] = None

    def __post_init__(self):
        S = as_symmetric(self.S)
        if not np.all(np.isfinite(S)):
            raise InvalidInput("S contains non-finite entries")
        if np.any(np.diag(S) < 0):
            raise InvalidInput("S has a negative diagonal entry")
        if not self.lam >= 0:
            raise InvalidInput(f"lam must be non-negative, got {self.lam}")
        object.__setattr__(self, "S", S)
        if self.init is not None:
            init = as_symmetric(self.init)
            if init.shape != S.shape:
                raise InvalidInput(f"init has shape {init.shape}, expected {S.shape}")
            object.__setattr__(self, "init", init)


@njit(cache=True)
def _polish(S, W, B, u, j, lam):
    # exact lasso solution on the current signed support, if it is consistent
    p = S.shape[0]
    m = 0
    for k in range(p):
        if k != j and B[k, j] != 0.0:
            m += 1
    if m == 0:
        return False
    idx = np.empty(m, dtype=np.int64)
    m = 0
    for k in range(p):
        if k != j and B[k, j] != 0.0:
            idx[m] = k
            m += 1
    A = np.empty((m, m))
    rhs = np.empty(m)
    for a in range(m):
        ka = idx[a]
        rhs[a] = S[ka, j] - lam * np.sign(B[ka, j])
        for b in range(m):
            A[a, b] = W[ka, idx[b]]
    beta = np.linalg.solve(A, rhs)
    for a in range(m):
        if not np.isfinite(beta[a]) or np.sign(beta[a]) != np.sign(B[idx[a], j]):
            return False
    unew = np.zeros(p)
    for a in range(m):
        ka = idx[a]
        for k in range(p):
            unew[k] += W[k, ka] * beta[a]
    for k in range(p):
        if k != j and B[k, j] == 0.0 and abs(S[k, j] - unew[k]) > lam * (1.0 + 1e-12):
            return False
    for a in range(m):
        B[idx[a], j] = beta[a]
    for k in range(p):
        u[k] = unew[k] if k != j else 0.0
    return True


@njit(cache=True)
def _objective_on(W, S, j, lam, idx, m, x):
    # 0.5 x^T W_AA x - s_A^T x + lam |x|_1 over the index set idx[:m]
    val = 0.0
    for a in range(m):
        ka = idx[a]
        acc = 0.0
        for b in range(m):
            acc += W[ka, idx[b]] * x[b]
        val += 0.5 * x[a] * acc - S[ka, j] * x[a] + lam * abs(x[a])
    return val


@njit(cache=True)
def _feature_sign(S, W, B, u, j, lam, max_steps):
    # exact active-set lasso solve for column j (feature-sign search),
    # warm-started from B[:, j]; leaves u = W11 @ beta on success
    p = S.shape[0]
    act = np.zeros(p, dtype=np.bool_)
    sgn = np.zeros(p)
    for k in range(p):
        if k != j and B[k, j] != 0.0:
            act[k] = True
            sgn[k] = np.sign(B[k, j])
    need_add = False
    for step in range(max_steps):
        for k in range(p):
            acc = 0.0
            if k != j:
                for l in range(p):
                    if l != j and B[l, j] != 0.0:
                        acc += W[k, l] * B[l, j]
            u[k] = acc
        if need_add:
            best, best_k = lam * (1.0 + 1e-12), -1
            for k in range(p):
                if k != j and not act[k]:
                    g = abs(u[k] - S[k, j])
                    if g > best:
                        best, best_k = g, k
            if best_k < 0:
                return True
            act[best_k] = True
            sgn[best_k] = -np.sign(u[best_k] - S[best_k, j])
        m = 0
        for k in range(p):
            if act[k]:
                m += 1
        if m == 0:
            need_add = True
            continue
        idx = np.empty(m, dtype=np.int64)
        m = 0
        for k in range(p):
            if act[k]:
                idx[m] = k
                m += 1
        A = np.empty((m, m))
        rhs = np.empty(m)
        cur = np.empty(m)
        for a in range(m):
            ka = idx[a]
            rhs[a] = S[ka, j] - lam * sgn[ka]
            cur[a] = B[ka, j]
            for b in range(m):
                A[a, b] = W[ka, idx[b]]
        target = np.linalg.solve(A, rhs)
        for a in range(m):
            if not np.isfinite(target[a]):
                return False
        # line search over the target and every zero crossing on the way
        best_x = target.copy()
        best_f = _objective_on(W, S, j, lam, idx, m, target)
        trial = np.empty(m)
        for a in range(m):
            if cur[a] != 0.0 and np.sign(target[a]) != np.sign(cur[a]):
                t = cur[a] / (cur[a] - target[a])
                for b in range(m):
                    trial[b] = cur[b] + t * (target[b] - cur[b])
                trial[a] = 0.0
                f = _objective_on(W, S, j, lam, idx, m, trial)
                if f < best_f:
                    best_f = f
                    best_x[:] = trial
        consistent = True
        for a in range(m):
            ka = idx[a]
            x = best_x[a]
            if abs(x) < ZERO_THRESHOLD * 1e-3 or np.sign(x) != sgn[ka]:
                if abs(x) < ZERO_THRESHOLD * 1e-3 or x == 0.0:
                    x = 0.0
                consistent = consistent and x != 0.0 and np.sign(x) == sgn[ka]
            B[ka, j] = x
            if x == 0.0:
                act[ka] = False
            else:
                sgn[ka] = np.sign(x)
        need_add = consistent
    return False


@njit(cache=True)
def _sweeps(S, W, B, lam, max_sweeps, stop, inner_max):
    p = S.shape[0]
    u = np.empty(p)
    change = np.inf
    sweep = 0
    while sweep < max_sweeps:
        sweep += 1
        change = 0.0
        for j in range(p):
            # u = W11 @ beta for the current column, excluding row/col j
            for k in range(p):
                acc = 0.0
                if k != j:
                    for l in range(p):
                        if l != j:
                            acc += W[k, l] * B[l, j]
                u[k] = acc
            for it in range(inner_max):
                delta_max = 0.0
                for k in range(p):
                    if k == j:
                        continue
                    wkk = W[k, k]
                    old = B[k, j]
                    r = S[k, j] - (u[k] - wkk * old)
                    if r > lam:
                        new = (r - lam) / wkk
                    elif r < -lam:
                        new = (r + lam) / wkk
                    else:
                        new = 0.0
                    d = new - old
                    if d != 0.0:
                        B[k, j] = new
                        for l in range(p):
                            if l != j:
                                u[l] += d * W[l, k]
                        ad = abs(d) * wkk
                        if ad > delta_max:
                            delta_max = ad
                if delta_max < stop * 1e-2:
                    break
                if it % 2 == 0 and _polish(S, W, B, u, j, lam):
                    break
                if it == 3 and _feature_sign(S, W, B, u, j, lam, 4 * p):
                    break
            for k in range(p):
                if k != j:
                    d = abs(u[k] - W[k, j])
                    if d > change:
                        change = d
                    W[k, j] = u[k]
                    W[j, k] = u[k]
        if change < stop:
            break
    return sweep, change


def _feasible_start(S, lam, d, max_off):
    # off-diagonals shrunk toward zero stay within lam of S; PD whenever S is PSD
    t = lam / max_off
    while True:
        W = (1.0 - t) * S
        np.fill_diagonal(W, d)
        if t >= 1.0 or np.linalg.eigvalsh(W)[0] > 0:
            return W
        t = min(1.0, 2.0 * t)


def _warm_start(theta, S, lam, d):
    # working covariance implied by a previous estimate, clipped into the
    # dual box |W - S| <= lam so that column updates keep it positive definite
    try:
        W = spd_inverse(theta)
    except NotPositiveDefinite:
        return None, None
    W = np.clip(W, S - lam, S + lam)
    np.fill_diagonal(W, d)
    if np.linalg.eigvalsh(W)[0] <= 0:
        return None, None
    B = -theta / np.diag(theta)[None, :]
    np.fill_diagonal(B, 0.0)
    return W, np.ascontiguousarray(B)


def _precision_from_columns(W, B):
    p = W.shape[0]
    theta = np.zeros((p, p))
    for j in range(p):
        beta = B[:, j].copy()
        beta[j] = 0.0
        t_jj = 1.0 / (W[j, j] - W[j] @ beta)
        theta[:, j] = -beta * t_jj
        theta[j, j] = t_jj
    theta = (theta + theta.T) / 2.0
    theta[np.abs(theta) < ZERO_THRESHOLD] = 0.0
    return theta


def kkt_violation(S, theta, lam, penalize_diagonal=False):
    """Largest violation of the stationarity conditions at ``theta``.

    With ``R = S - inv(theta)``: penalized zero entries need ``|R| <= lam``,
    penalized non-zero entries need ``R + lam * sign(theta) == 0`` and
    unpenalized diagonal entries need ``R == 0``.
    """
    S = as_symmetric(S)
    R = S - spd_inverse(theta)
    p = S.shape[0]
    pen = np.ones((p, p), dtype=bool)
    if not penalize_diagonal:
        np.fill_diagonal(pen, False)
    nz = theta != 0
    viol = np.where(~pen, np.abs(R), 0.0)
    viol = np.where(pen & nz, np.abs(R + lam * np.sign(theta)), viol)
    viol = np.where(pen & ~nz, np.maximum(np.abs(R) - lam, 0.0), viol)
    return float(viol.max())


def glasso_objective(S, theta, lam, penalize_diagonal=False):
    pen = l1_off(theta)
    if penalize_diagonal:
        pen += float(np.sum(np.abs(np.diag(theta))))
    return -spd_logdet(theta) + float(np.sum(as_symmetric(S) * theta)) + lam * pen


def graphical_lasso(problem: GlassoProblem):
    """Solve a graphical lasso problem.

    Returns
    -------
    ndarray
        The SPD precision estimate; entries with magnitude below 1e-10 are
        exact zeros.

    Raises
    ------
    NotPositiveDefinite
        ``lam == 0`` with a singular ``S``, or an unpenalized zero diagonal.
    NoConvergence
        The KKT certificate did not reach ``tol`` within ``max_sweeps``;
        ``last_iterate`` holds the final estimate.
    """
    S, lam, tol = problem.S, float(problem.lam), problem.tol
    p = S.shape[0]
    diag_pen = lam if problem.penalize_diagonal else 0.0
    if lam == 0.0:
        return spd_inverse(S)
    d = np.diag(S) + diag_pen
    if np.any(d <= 0):
        raise NotPositiveDefinite("zero diagonal entry with an unpenalized diagonal")
    offdiag = np.abs(S - np.diag(np.diag(S)))
    if p == 1 or offdiag.max() <= lam:
        return np.diag(1.0 / d)

    W, B = None, np.zeros((p, p))
    if problem.init is not None:
        W, B = _warm_start(problem.init, S, lam, d)
    if W is None:
        W, B = _feasible_start(S, lam, d, offdiag.max()), np.zeros((p, p))
    Sw = S.copy()
    np.fill_diagonal(Sw, d)
    stop = tol
    used = 0
    theta, viol, best = None, np.inf, np.inf
    stalled = 0
    while used < problem.max_sweeps:
        n_sweeps, _ = _sweeps(Sw, W, B, lam, problem.max_sweeps - used, stop, 1000)
        used += n_sweeps
        theta = _precision_from_columns(W, B)
        try:
            viol = kkt_violation(S, theta, lam, problem.penalize_diagonal)
        except (NotPositiveDefinite, InvalidInput):
            viol = np.inf
        if viol <= tol:
            return theta
        # tighter sweeps no longer help once rounding dominates the residual
        stalled = stalled + 1 if viol > 0.5 * best else 0
        best = min(best, viol)
        if stalled >= 3:
            break
        stop *= 0.1
    raise NoConvergence(
        f"graphical lasso did not reach KKT tolerance {tol:g} after {used} sweeps "
        f"(residual {viol:.3e})",
        last_iterate=theta,
        residual=viol,
    )


def glasso(S, lam, penalize_diagonal=False, tol=1e-6, max_sweeps=500, init=None):
    """Shorthand for ``graphical_lasso(GlassoProblem(...))``.

    ``init`` is an optional precision estimate (for instance the solution
    of a nearby problem) used as a warm start.
    """
    return graphical_lasso(GlassoProblem(S, lam, penalize_diagonal, tol, max_sweeps, init))
