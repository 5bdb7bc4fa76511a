"""Penalty selection by held-out entry imputation.

A small random fraction of every view is hidden, the remaining data are
imputed with a one-step EM approximation under each candidate penalty,
and candidates are scored by the normalized squared imputation error.
"""
import csv
import itertools
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dataset import MultiViewDataset
from .errors import DegenerateScale, InvalidMask, IoError, IpcaError, NoConvergence, ShapeError
from .estimators import FitOptions, Family, PenaltySpec, fit
from .numerics import as_symmetric, spd_inverse

DEFAULT_LADDER = tuple(10.0 ** np.arange(-3, 4))


@dataclass(frozen=True)
class MissingMask:
    """Held-out entries: ``indices[k]`` is an ``(m_k, 2)`` array of
    ``(row, col)`` pairs in row-major order."""

    indices: tuple
    seed: int
    fraction: float
    shapes: tuple = ()

    def boolean(self, k):
        out = np.zeros(self.shapes[k], dtype=bool)
        idx = self.indices[k]
        out[idx[:, 0], idx[:, 1]] = True
        return out

    @property
    def size(self):
        return sum(len(i) for i in self.indices)


@dataclass(frozen=True)
class TuningReport:
    """Candidates in evaluation order with their imputation errors."""

    grid: tuple
    errors: np.ndarray
    best_index: int
    mode: str
    seed: int = 0
    fraction: float = 0.05

    @property
    def best(self):
        return self.grid[self.best_index]


# ---------------------------------------------------------------------------
# masking


def _repair(mask, rng):
    n, pk = mask.shape
    for _ in range(100 * mask.size):
        rows = np.flatnonzero(mask.all(axis=1))
        cols = np.flatnonzero(mask.all(axis=0))
        if rows.size == 0 and cols.size == 0:
            return mask
        if rows.size:
            i = rows[0]
            j = rng.integers(pk)
        else:
            j = cols[0]
            i = rng.integers(n)
        mask[i, j] = False
        free = np.flatnonzero(~mask.ravel())
        free = free[free != i * pk + j]
        mask.ravel()[rng.choice(free)] = True
    raise InvalidMask("could not place the mask without emptying a row or column")


def mask_random(data, fraction=0.05, seed=0):
    """Hide ``round(fraction * n * p_k)`` uniformly chosen entries per view.

    Masks leaving a row or column fully hidden are repaired by moving
    offending entries to random observed positions.

    Returns
    -------
    masked : MultiViewDataset
        Copy of the (uncentered) data with hidden entries set to NaN.
    mask : MissingMask
    held_out : tuple of ndarray
        True values at ``mask.indices[k]``, in the same order.
    """
    if not 0 <= fraction < 0.5:
        raise InvalidMask(f"fraction must lie in [0, 0.5), got {fraction}")
    rng = np.random.default_rng(seed)
    views, indices, held = [], [], []
    for k, X in enumerate(data.views):
        n, pk = X.shape
        count = int(math.floor(fraction * n * pk + 0.5))
        if count > n * pk - max(n, pk):
            raise InvalidMask(f"view {k}: cannot hide {count} of {n * pk} entries and keep every row and column observed")
        mask = np.zeros((n, pk), dtype=bool)
        if count:
            mask.ravel()[rng.choice(n * pk, size=count, replace=False)] = True
            mask = _repair(mask, rng)
        idx = np.argwhere(mask)
        Xm = np.array(X, copy=True)
        held.append(Xm[mask].copy())
        Xm[mask] = np.nan
        views.append(Xm)
        indices.append(idx)
    masked = MultiViewDataset(views, data.sample_ids, data.feature_names)
    return masked, MissingMask(tuple(indices), seed, fraction, tuple(X.shape for X in data.views)), tuple(held)


def observed_column_means(masked):
    return tuple(np.nanmean(X, axis=0) for X in masked.views)


# ---------------------------------------------------------------------------
# conditional expectation


def conditional_expectation(X, missing, mu, sigma, delta, tol=1e-6, max_passes=50):
    """Conditional mean of the missing entries of a matrix-normal view.

    ``X`` ~ N(1 mu^T, Sigma (x) Delta).  Missing entries (boolean
    ``missing``) start at their current value, or ``mu_j`` when that is not
    finite.  Each pass sets the missing entries of every row, then of every
    column, to their exact conditional mean given all other entries; the
    passes repeat until no entry moves by ``tol`` or more.  Observed entries
    are returned unchanged.

    Raises
    ------
    NoConvergence
        ``max_passes`` reached; ``last_iterate`` holds the current fill.
    """
    X = np.array(X, dtype=np.float64, copy=True)
    missing = np.asarray(missing, dtype=bool)
    if missing.shape != X.shape:
        raise ShapeError(f"mask shape {missing.shape} differs from data shape {X.shape}")
    mu = np.asarray(mu, dtype=np.float64)
    n, pk = X.shape
    if not missing.any():
        return X
    P = spd_inverse(sigma)
    Q = spd_inverse(delta)
    if P.shape != (n, n) or Q.shape != (pk, pk) or mu.shape != (pk,):
        raise ShapeError("mu, sigma or delta do not match the view shape")
    fill = np.where(np.isfinite(X), X, np.broadcast_to(mu, X.shape))
    X[missing] = fill[missing]
    R = X - mu
    G = P @ R @ Q
    rows = [(i, np.flatnonzero(missing[i])) for i in np.flatnonzero(missing.any(axis=1))]
    cols = [(j, np.flatnonzero(missing[:, j])) for j in np.flatnonzero(missing.any(axis=0))]
    row_fac = [np.linalg.cholesky(Q[np.ix_(M, M)] * P[i, i]) for i, M in rows]
    col_fac = [np.linalg.cholesky(P[np.ix_(N, N)] * Q[j, j]) for j, N in cols]

    def solve(L, b):
        return np.linalg.solve(L.T, np.linalg.solve(L, b))

    change = np.inf
    for _ in range(max_passes):
        change = 0.0
        for (i, M), L in zip(rows, row_fac):
            step = -solve(L, G[i, M])
            R[i, M] += step
            G += np.outer(P[:, i], step @ Q[M, :])
            change = max(change, float(np.max(np.abs(step))))
        for (j, N), L in zip(cols, col_fac):
            step = -solve(L, G[N, j])
            R[N, j] += step
            G += np.outer(P[:, N] @ step, Q[j, :])
            change = max(change, float(np.max(np.abs(step))))
        if change < tol:
            break
    out = np.where(missing, R + mu, X)
    if change >= tol:
        raise NoConvergence(
            f"conditional expectation did not settle in {max_passes} passes (last change {change:.3e})",
            last_iterate=out,
            residual=change,
        )
    return out


# ---------------------------------------------------------------------------
# one-step imputation


def _e_step(X, missing, mu, sigma, delta):
    try:
        return conditional_expectation(X, missing, mu, sigma, delta)
    except NoConvergence as exc:
        warnings.warn(f"using the last iterate: {exc}", RuntimeWarning, stacklevel=3)
        return exc.last_iterate


def initial_fill(masked):
    """Column-mean fill followed by a ridge-regularized conditional mean
    that treats the rows as independent."""
    out = []
    for X in masked.views:
        missing = ~np.isfinite(X)
        mu = np.nanmean(X, axis=0)
        filled = np.where(missing, mu, X)
        if missing.any():
            Xc = filled - filled.mean(axis=0)
            delta = as_symmetric(Xc.T @ Xc / X.shape[0])
            eps = 1e-3 * float(np.mean(np.diag(delta)))
            if not eps > 0:
                eps = 1e-3
            delta += eps * np.eye(X.shape[1])
            filled = _e_step(filled, missing, mu, np.eye(X.shape[0]), delta)
        out.append(filled)
    return out


def impute_onestep(masked, penalty, options=FitOptions()):
    """One-step EM imputation under ``penalty``.

    Initial fill (see :func:`initial_fill`), one penalized fit on the filled
    data, then one E-step with the fitted means and covariances.  Only the
    NaN entries of ``masked`` change.
    """
    missing = [~np.isfinite(X) for X in masked.views]
    filled = initial_fill(masked)
    f = fit(masked.with_views(filled), penalty, options)
    out = []
    for k, (X, Xf, miss) in enumerate(zip(masked.views, filled, missing)):
        if miss.any():
            Xe = _e_step(Xf, miss, f.mu_hat[k], f.sigma_hat, f.delta_hat[k])
            out.append(np.where(miss, Xe, X))
        else:
            out.append(np.array(X, copy=True))
    return masked.with_views(out)


def imputation_error(imputed, mask, held_out, column_means):
    """Average over views of ``||X_hat^m - X^m||^2 / ||X^m - Xbar^m||^2``.

    ``column_means`` are the per-view means used as the reference fill, so
    imputing with them scores exactly 1.

    Raises
    ------
    InvalidMask
        The mask is empty.
    DegenerateScale
        Held-out values of a view all equal their column means.
    """
    views = imputed.views if isinstance(imputed, MultiViewDataset) else imputed
    if mask.size == 0:
        raise InvalidMask("the mask is empty")
    ratios = []
    for k, (X, idx, truth, mean) in enumerate(zip(views, mask.indices, held_out, column_means)):
        if len(idx) == 0:
            continue
        est = np.asarray(X)[idx[:, 0], idx[:, 1]]
        ref = np.asarray(mean)[idx[:, 1]]
        den = float(np.sum((truth - ref) ** 2))
        if den <= 0:
            raise DegenerateScale(f"view {k}: held-out values equal their column means")
        ratios.append(float(np.sum((est - truth) ** 2)) / den)
    return float(np.mean(ratios))


# ---------------------------------------------------------------------------
# selection


def _score(args):
    masked, mask, held, means, penalty, options = args
    try:
        imputed = impute_onestep(masked, penalty, options)
        return imputation_error(imputed, mask, held, means)
    except (IpcaError, np.linalg.LinAlgError, FloatingPointError):
        return math.inf


def _evaluate(cands, ctx, options, jobs):
    args = [ctx + (c, options) for c in cands]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_score, args))
    return [_score(a) for a in args]


def _ladders(family, K, ladders):
    n_par = K if Family(family) is Family.MULTIPLICATIVE_FROBENIUS else K + 1
    if ladders is None:
        ladders = [DEFAULT_LADDER]
    ladders = [tuple(float(x) for x in lad) for lad in ladders]
    if len(ladders) == 1:
        ladders = ladders * n_par
    if len(ladders) != n_par or any(len(l) == 0 for l in ladders):
        raise InvalidMask(f"need {n_par} non-empty ladders for {Family(family).value} with K={K}")
    return ladders


def select_penalties(
    data,
    family,
    grid=None,
    ladders=None,
    mode="full",
    fraction=0.05,
    seed=0,
    options=FitOptions(),
    jobs=1,
):
    """Choose penalty parameters minimizing held-out imputation error.

    Parameters
    ----------
    grid : sequence of PenaltySpec, optional
        Explicit candidates (full mode only).
    ladders : sequence of sequences, optional
        Per-parameter values in the order ``lambda_sigma`` (if the family
        has one), ``lambda_1..lambda_K``; a single ladder is shared.
        Defaults to ``10**-3 .. 10**3``.
    mode : {"full", "greedy"}
        ``full`` scores the Cartesian product; ``greedy`` sweeps one
        parameter at a time in the order above, starting every parameter
        at its ladder midpoint and fixing it at its best value.

    A single mask (from ``seed``) is shared by all candidates.  Failed fits
    score ``inf``; ties go to the earliest candidate.
    """
    fam = Family(family)
    if fam is Family.NONE:
        raise InvalidMask("the unpenalized family has nothing to tune")
    if mode not in ("full", "greedy"):
        raise InvalidMask(f"mode must be 'full' or 'greedy', got {mode!r}")
    masked, mask, held = mask_random(data, fraction, seed)
    if mask.size == 0:
        raise InvalidMask("fraction too small: the mask is empty")
    ctx = (masked, mask, held, observed_column_means(masked))

    def run(cands):
        return _evaluate(cands, ctx, options, jobs)

    if mode == "full":
        if grid is None:
            lads = _ladders(fam, data.K, ladders)
            grid = [PenaltySpec.make(fam, vals, data.K) for vals in itertools.product(*lads)]
        grid = tuple(grid)
        if not grid:
            raise InvalidMask("empty candidate grid")
        errors = np.asarray(run(grid), dtype=np.float64)
    else:
        if grid is not None:
            raise InvalidMask("greedy mode takes per-parameter ladders, not a grid")
        lads = _ladders(fam, data.K, ladders)
        current = [lad[(len(lad) - 1) // 2] for lad in lads]
        evaluated, errs = [], []
        for i, lad in enumerate(lads):
            cands = []
            for v in lad:
                vals = list(current)
                vals[i] = v
                cands.append(PenaltySpec.make(fam, vals, data.K))
            scores = run(cands)
            current[i] = lad[int(np.argmin(scores))]
            evaluated.extend(cands)
            errs.extend(scores)
        grid = tuple(evaluated)
        errors = np.asarray(errs, dtype=np.float64)
    return TuningReport(grid, errors, int(np.argmin(errors)), mode, seed, fraction)


def write_report(report, out_dir):
    """Write ``tuning.csv`` (one row per candidate, grid order) and
    ``tuning.json`` (best parameters, mode, seed, fraction)."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        K = report.grid[0].K
        has_sigma = report.grid[0].lambda_sigma is not None
        head = ["index"] + (["lambda_sigma"] if has_sigma else []) + [f"lambda_{k + 1}" for k in range(K)] + ["error"]
        with open(os.path.join(out_dir, "tuning.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(head)
            for i, (c, e) in enumerate(zip(report.grid, report.errors)):
                w.writerow([i] + [format(v, ".17g") for v in c.values()] + [format(float(e), ".17g")])
        best = report.best
        summary = {
            "family": best.family.value,
            "mode": report.mode,
            "seed": report.seed,
            "fraction": report.fraction,
            "n_candidates": len(report.grid),
            "best_index": report.best_index,
            "best_error": float(report.errors[report.best_index]),
            "lambda_sigma": best.lambda_sigma,
            "lambda_k": list(best.lambda_k),
        }
        with open(os.path.join(out_dir, "tuning.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write tuning report to {out_dir!r}: {exc}") from exc
