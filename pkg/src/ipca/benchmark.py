"""Subspace-recovery benchmark: named scenarios, methods and trial runner."""
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, IpcaError
from .estimators import FitOptions, PenaltySpec, fit, theory_lambdas
from .model import extract, top_scores
from .simulation import (
    base_scenario,
    baseline_concatenated_pca,
    baseline_individual_pca,
    baseline_mfa,
    desk_scenario,
    simulate_jive,
    simulate_scenario,
    sparse_scenario,
    subspace_recovery_error,
)
from .tuning import DEFAULT_LADDER, select_penalties

SCENARIOS = ("base", "desk", "sparse", "jive")
TUNED_METHODS = ("mult-frob", "add-frob", "l1-cov")
METHODS = TUNED_METHODS + ("l1-corr", "concat-pca", "mfa")


def check_method(name):
    if name in METHODS:
        return name
    if name.startswith("pca-"):
        try:
            if int(name[4:]) >= 1:
                return name
        except ValueError:
            pass
    raise InvalidInput(f"unknown method {name!r}; choose from {', '.join(METHODS)} or pca-<view>")


def make_scenario(name, seed, laplace_b=None):
    """Generate ``(data, truth)`` for a named scenario."""
    if name == "base":
        return simulate_scenario(base_scenario(seed, laplace_b=laplace_b))
    if name == "desk":
        return simulate_scenario(desk_scenario(seed, laplace_b=laplace_b))
    if name == "sparse":
        return simulate_scenario(sparse_scenario(seed))
    if name == "jive":
        return simulate_jive(50, (60, 100, 80), 5, (10, 15, 20), 1.0, "normal", seed)
    raise InvalidInput(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


@dataclass(frozen=True)
class TuneSettings:
    ladder: tuple = DEFAULT_LADDER
    greedy: bool = True
    fraction: float = 0.05
    options: FitOptions = FitOptions()


def estimate_basis(method, data, d, seed=0, tune=TuneSettings()):
    """Top-``d`` joint score basis estimated by ``method``."""
    method = check_method(method)
    if method == "concat-pca":
        return baseline_concatenated_pca(data, d)
    if method == "mfa":
        return baseline_mfa(data, d)
    if method.startswith("pca-"):
        k = int(method[4:]) - 1
        return baseline_individual_pca(data, k, d)
    if method == "l1-corr":
        f = fit(data, theory_lambdas(data, 0.5), tune.options)
    else:
        report = select_penalties(
            data,
            method,
            ladders=[tune.ladder],
            mode="greedy" if tune.greedy else "full",
            fraction=tune.fraction,
            seed=seed,
            options=tune.options,
        )
        f = fit(data, report.best, tune.options)
    return top_scores(extract(f), d)


def run_trial(args):
    """One seed of the benchmark; returns ``[(method, error), ...]``."""
    scenario, seed, methods, d, laplace_b, tune = args
    data, truth = make_scenario(scenario, seed, laplace_b)
    d = truth.joint_basis.shape[1] if d is None else d
    out = []
    for m in methods:
        try:
            err = subspace_recovery_error(truth.joint_basis[:, :d], estimate_basis(m, data, d, seed, tune))
        except (IpcaError, np.linalg.LinAlgError):
            err = math.nan
        out.append((m, err))
    return out


def summarize(rows):
    """Mean, sample sd and count of the finite errors per method, in first-seen order."""
    by = {}
    for method, err in rows:
        by.setdefault(method, []).append(err)
    out = []
    for method, errs in by.items():
        e = np.asarray([x for x in errs if math.isfinite(x)])
        sd = float(e.std(ddof=1)) if e.size > 1 else math.nan
        out.append((method, float(e.mean()) if e.size else math.nan, sd, int(e.size)))
    return out
