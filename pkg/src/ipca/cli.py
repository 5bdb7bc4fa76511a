"""Command-line front end: ``ipca {simulate,fit,scores,pve,tune,benchmark}``.

Every command takes ``--config FILE`` (JSON) and flags; flags override the
file, and the fully resolved configuration is written to
``<out>/resolved_config.json``.  Exit codes: 0 success, 1 runtime or
numerical error, 2 configuration error.
"""
import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .benchmark import SCENARIOS, TuneSettings, check_method, make_scenario, run_trial, summarize
from .dataset import load_csv, write_csv
from .errors import IpcaError
from .estimators import Family, FitOptions, PenaltySpec, fit
from .model import extract, mpve, pve, top_scores
from .tuning import DEFAULT_LADDER, select_penalties, write_report

SCHEMA_VERSION = 1


class ConfigError(Exception):
    pass


_COMMON = {"schema_version": SCHEMA_VERSION, "seed": 0, "jobs": 1, "out": "ipca_out"}
_FIT = {
    "inputs": [],
    "penalty": "mult-frob",
    "lambda": [1.0],
    "grid": list(DEFAULT_LADDER),
    "greedy": False,
    "fraction": 0.05,
    "max_iter": 100,
    "rel_tol": 1e-6,
    "assume_centered": False,
}
DEFAULTS = {
    "simulate": {**_COMMON, "scenario": "desk", "laplace_b": None},
    "fit": {**_COMMON, **_FIT},
    "scores": {**_COMMON, **_FIT, "d": 2},
    "pve": {**_COMMON, **_FIT, "m": None},
    "tune": {**_COMMON, **{k: v for k, v in _FIT.items() if k != "lambda"}},
    "benchmark": {
        **_COMMON,
        "scenario": "desk",
        "trials": 3,
        "methods": ["mult-frob", "concat-pca", "mfa"],
        "d": None,
        "laplace_b": None,
        "grid": list(DEFAULT_LADDER),
        "greedy": True,
        "fraction": 0.05,
        "max_iter": 100,
        "rel_tol": 1e-6,
    },
}


# ---------------------------------------------------------------------------
# configuration


def _parser():
    p = argparse.ArgumentParser(prog="ipca", description="Integrated PCA toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS
    for name in DEFAULTS:
        c = sub.add_parser(name)
        c.add_argument("--config", default=None, help="JSON configuration file")
        c.add_argument("--seed", type=int, default=S)
        c.add_argument("--jobs", type=int, default=S)
        c.add_argument("--out", default=S)
        keys = DEFAULTS[name]
        if "inputs" in keys:
            c.add_argument("--inputs", nargs="+", default=S, help="one CSV per view")
            c.add_argument("--penalty", choices=[f.value for f in Family], default=S)
            c.add_argument("--fraction", type=float, default=S)
            c.add_argument("--max-iter", dest="max_iter", type=int, default=S)
            c.add_argument("--rel-tol", dest="rel_tol", type=float, default=S)
            c.add_argument("--assume-centered", dest="assume_centered", action=argparse.BooleanOptionalAction, default=S)
        if "lambda" in keys:
            c.add_argument("--lambda", dest="lambda", nargs="+", default=S, help="values, or 'auto'")
        if "grid" in keys:
            c.add_argument("--grid", nargs="+", type=float, default=S, help="per-parameter ladder")
            c.add_argument("--greedy", action=argparse.BooleanOptionalAction, default=S)
        if name in ("simulate", "benchmark"):
            c.add_argument("--scenario", default=S)
            c.add_argument("--laplace-b", dest="laplace_b", type=float, default=S)
        if name == "benchmark":
            c.add_argument("--fraction", type=float, default=S)
            c.add_argument("--trials", type=int, default=S)
            c.add_argument("--methods", nargs="+", default=S)
            c.add_argument("--max-iter", dest="max_iter", type=int, default=S)
            c.add_argument("--rel-tol", dest="rel_tol", type=float, default=S)
        if "d" in keys:
            c.add_argument("--d", type=int, default=S)
        if "m" in keys:
            c.add_argument("--m", type=int, default=S)
    return p


def resolve_config(command, config_path, overrides):
    """Defaults, then the JSON file, then flags; unknown keys are rejected."""
    cfg = dict(DEFAULTS[command])
    if config_path:
        try:
            with open(config_path, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {config_path!r}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(loaded)
    cfg.update(overrides)
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {cfg['schema_version']!r}")
    _validate(command, cfg)
    return cfg


def _validate(command, cfg):
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    if not isinstance(cfg["jobs"], int) or cfg["jobs"] < 1:
        raise ConfigError("jobs must be a positive integer")
    if not cfg["out"]:
        raise ConfigError("out must be a directory path")
    if "scenario" in cfg and cfg["scenario"] not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg['scenario']!r}; choose from {', '.join(SCENARIOS)}")
    if "inputs" in cfg and not cfg["inputs"]:
        raise ConfigError("at least one input CSV is required (--inputs)")
    if "penalty" in cfg:
        try:
            Family(cfg["penalty"])
        except ValueError:
            raise ConfigError(f"unknown penalty {cfg['penalty']!r}") from None
    if "lambda" in cfg:
        lam = cfg["lambda"]
        lam = [lam] if not isinstance(lam, list) else lam
        if lam != ["auto"]:
            try:
                lam = [float(x) for x in lam]
            except (TypeError, ValueError):
                raise ConfigError(f"lambda must be numbers or 'auto', got {cfg['lambda']!r}") from None
        cfg["lambda"] = lam
    if "grid" in cfg:
        try:
            cfg["grid"] = [float(x) for x in cfg["grid"]]
        except (TypeError, ValueError):
            raise ConfigError("grid must be a list of numbers") from None
        if not cfg["grid"]:
            raise ConfigError("grid must not be empty")
    if "fraction" in cfg and not 0 < cfg["fraction"] < 0.5:
        raise ConfigError("fraction must lie in (0, 0.5)")
    if "methods" in cfg:
        try:
            for m in cfg["methods"]:
                check_method(m)
        except IpcaError as exc:
            raise ConfigError(str(exc)) from None
    if "trials" in cfg and (not isinstance(cfg["trials"], int) or cfg["trials"] < 1):
        raise ConfigError("trials must be a positive integer")


# ---------------------------------------------------------------------------
# helpers


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _options(cfg):
    return FitOptions(max_iter=cfg["max_iter"], rel_tol=cfg["rel_tol"], assume_centered=cfg["assume_centered"])


def _tune(cfg, data):
    return select_penalties(
        data,
        cfg["penalty"],
        ladders=[cfg["grid"]],
        mode="greedy" if cfg["greedy"] else "full",
        fraction=cfg["fraction"],
        seed=cfg["seed"],
        options=_options(cfg),
        jobs=cfg["jobs"],
    )


def _fit(cfg):
    data = load_csv(cfg["inputs"])
    report = None
    if cfg["lambda"] == ["auto"]:
        if cfg["penalty"] == Family.NONE.value:
            raise ConfigError("lambda 'auto' needs a penalized family")
        report = _tune(cfg, data)
        penalty = report.best
    else:
        penalty = PenaltySpec.make(cfg["penalty"], cfg["lambda"], data.K)
    return data, fit(data, penalty, _options(cfg)), report


def _svd_angle(fit_result, model):
    X = fit_result.data.views[0]
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    r = int(np.sum(s > 1e-10 * s[0])) if s.size else 0
    worst = 0.0
    for i in range(r):
        c = float(model.scores[:, i] @ U[:, i])
        worst = max(worst, math.atan2(np.linalg.norm(U[:, i] - c * model.scores[:, i]), abs(c)))
    return worst


def _pc_names(m):
    return [f"pc{i + 1}" for i in range(m)]


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg):
    out = cfg["out"]
    data, truth = make_scenario(cfg["scenario"], cfg["seed"], cfg["laplace_b"])
    files = []
    for k, X in enumerate(data.views):
        name = f"view_{k}.csv"
        write_csv(X, os.path.join(out, name), data.sample_ids, data.feature_names[k])
        files.append(name)
    d = truth.joint_basis.shape[1]
    write_csv(truth.joint_basis, os.path.join(out, "truth_basis.csv"), data.sample_ids, _pc_names(d))
    write_csv(truth.sigma_true, os.path.join(out, "sigma_true.csv"), data.sample_ids, data.sample_ids)
    _write_json(
        os.path.join(out, "manifest.json"),
        {"scenario": cfg["scenario"], "seed": cfg["seed"], "n": data.n, "p_k": list(data.p_k), "d": d, "views": files},
    )


def cmd_fit(cfg):
    out = cfg["out"]
    data, f, report = _fit(cfg)
    model = extract(f)
    ids = data.sample_ids
    write_csv(f.sigma_hat, os.path.join(out, "sigma_hat.csv"), ids, ids)
    write_csv(model.scores, os.path.join(out, "scores.csv"), ids, _pc_names(data.n))
    write_csv(model.sigma_eigenvalues[:, None], os.path.join(out, "sigma_eigenvalues.csv"), _pc_names(data.n), ["eigenvalue"])
    for k in range(data.K):
        names = data.feature_names[k]
        write_csv(f.delta_hat[k], os.path.join(out, f"delta_hat_{k}.csv"), names, names)
        write_csv(model.loadings[k], os.path.join(out, f"loadings_{k}.csv"), names, _pc_names(data.p_k[k]))
        write_csv(
            model.delta_eigenvalues[k][:, None],
            os.path.join(out, f"delta_eigenvalues_{k}.csv"),
            _pc_names(data.p_k[k]),
            ["eigenvalue"],
        )
    trace = f.objective_trace
    write_csv(trace[:, None], os.path.join(out, "objective_trace.csv"), [str(i) for i in range(trace.size)], ["objective"])
    info = {
        "penalty": f.penalty.family.value,
        "lambda_sigma": f.penalty.lambda_sigma,
        "lambda_k": list(f.penalty.lambda_k),
        "converged": f.converged,
        "iterations": f.iterations,
        "normalization": f.normalization,
        "final_objective": float(trace[-1]),
        "tuned": report is not None,
    }
    if data.K == 1:
        info["svd_check_max_angle"] = _svd_angle(f, model)
    _write_json(os.path.join(out, "fit.json"), info)
    if report is not None:
        write_report(report, out)


def cmd_scores(cfg):
    data, f, _ = _fit(cfg)
    d = cfg["d"]
    model = extract(f)
    write_csv(top_scores(model, d), os.path.join(cfg["out"], "scores.csv"), data.sample_ids, _pc_names(d))


def cmd_pve(cfg):
    data, f, _ = _fit(cfg)
    model = extract(f)
    rows = []
    for k in range(data.K):
        M = min(data.n, data.p_k[k]) if cfg["m"] is None else min(cfg["m"], data.n, data.p_k[k])
        for m in range(1, M + 1):
            rows.append((k, m, pve(f.data, model, k, m), mpve(f.data, model, k, m)))
    with open(os.path.join(cfg["out"], "pve.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["view", "m", "cumulative", "marginal"])
        for k, m, c, mg in rows:
            w.writerow([k, m, format(c, ".17g"), format(mg, ".17g")])


def cmd_tune(cfg):
    data = load_csv(cfg["inputs"])
    if cfg["penalty"] == Family.NONE.value:
        raise ConfigError("tuning needs a penalized family")
    write_report(_tune(cfg, data), cfg["out"])


def cmd_benchmark(cfg):
    out = cfg["out"]
    tune = TuneSettings(
        tuple(cfg["grid"]),
        cfg["greedy"],
        cfg["fraction"],
        FitOptions(max_iter=cfg["max_iter"], rel_tol=cfg["rel_tol"]),
    )
    seeds = [cfg["seed"] + t for t in range(cfg["trials"])]
    jobs = [(cfg["scenario"], s, list(cfg["methods"]), cfg["d"], cfg["laplace_b"], tune) for s in seeds]
    if cfg["jobs"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            results = list(pool.map(run_trial, jobs))
    else:
        results = [run_trial(j) for j in jobs]
    rows = []
    with open(os.path.join(out, "results.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "method", "seed", "error"])
        for s, res in zip(seeds, results):
            for method, err in res:
                w.writerow([cfg["scenario"], method, s, format(err, ".17g")])
                rows.append((method, err))
    with open(os.path.join(out, "summary.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "mean", "sd", "n"])
        for method, mean, sd, cnt in summarize(rows):
            w.writerow([method, format(mean, ".17g"), format(sd, ".17g"), cnt])
    _write_json(
        os.path.join(out, "manifest.json"),
        {
            "scenario": cfg["scenario"],
            "seeds": seeds,
            "methods": list(cfg["methods"]),
            "d": cfg["d"],
            "laplace_b": cfg["laplace_b"],
        },
    )


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "scores": cmd_scores,
    "pve": cmd_pve,
    "tune": cmd_tune,
    "benchmark": cmd_benchmark,
}


def main(argv=None):
    args = vars(_parser().parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config")
    try:
        cfg = resolve_config(command, config_path, args)
        os.makedirs(cfg["out"], exist_ok=True)
        _write_json(os.path.join(cfg["out"], "resolved_config.json"), {"command": command, **cfg})
        COMMANDS[command](cfg)
    except ConfigError as exc:
        print(f"ipca: configuration error: {exc}", file=sys.stderr)
        return 2
    except (IpcaError, OSError, np.linalg.LinAlgError) as exc:
        print(f"ipca: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
