"""Experiment orchestration: simulate datasets, run a reference posterior and
each SMC smoother at its budget, compute MAE*/MAEP* and diagnostic curves,
aggregate across replications, and write CSV/JSON artifacts.

Replications are independent tasks; per-replication seeds derive from the
master seed and the replication index, never from scheduling order, so
aggregates are identical whether replications run serially or in a pool.
Within a replication, algorithms run serially for fair timing.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .config import AlgorithmSpec, ExperimentConfig
from .dataio import fmt, write_csv
from .errors import SmcError
from .filters import storvik_filter
from .mcmc import gibbs_ffbs, single_site_mh
from .metrics import (
    ParamSummary,
    mae_star,
    maep_star,
    standardized_errors,
    state_param_correlation,
)
from .models import get_model, simulate
from .smoothers import (
    fit_joint_gaussian,
    pls_smooth,
    plsa_smooth,
    refilter_ffbs,
    refilter_smooth,
)

_DATASET_TAG = 1
_REFERENCE_TAG = 2
_CORRELATION_TAG = 3
_ALGO_TAG = 10


def sub_rng(seed, *tags):
    """A generator keyed by (seed, tags); stable across scheduling order."""
    return np.random.default_rng([int(seed)] + [int(t) for t in tags])


def _build_model(config):
    return get_model(config.model, **config.model_kwargs)


def _true_params(config, model):
    if config.true_params is not None:
        return np.asarray(config.true_params, dtype=float)
    return np.asarray(model.default_true_params, dtype=float)


def _reference_kind(config):
    if config.reference != "auto":
        return config.reference
    return "gibbs_ffbs" if config.model == "ar1" else "single_site_mh"


def run_reference(model, y, kind, iterations, rng):
    """Reference smoothing posterior: per-step means/sds and a parameter
    summary, from an exact-block Gibbs chain or a long single-site chain."""
    if kind == "gibbs_ffbs":
        chain = gibbs_ffbs(model, y, iterations, rng=rng)
    elif kind == "single_site_mh":
        chain = single_site_mh(model, y, iterations, rng=rng)
    else:
        raise ValueError(f"unknown reference '{kind}'")
    traj = chain.draws.trajectories
    summary = ParamSummary.from_draws(model.param_names, chain.draws.params)
    return traj.mean(axis=0), traj.std(axis=0, ddof=1), summary, chain


def _smoothed_summary(model, draws):
    means = draws.trajectories.mean(axis=0)
    psum = ParamSummary.from_draws(model.param_names, draws.params)
    return means, psum


def run_algorithm(spec, model, y, rng):
    """Run one algorithm at its budget; returns (state means, param summary)."""
    if spec.name == "pls":
        history = storvik_filter(model, y, spec.n, rng=rng)
        draws = pls_smooth(model, history, n_draws=spec.m0, rng=rng)
    elif spec.name == "plsa":
        history = storvik_filter(model, y, spec.n, rng=rng)
        approx = fit_joint_gaussian(history)
        draws = plsa_smooth(model, history, approx, n_draws=spec.m0, rng=rng)
    elif spec.name == "refilter":
        draws = refilter_smooth(model, y, spec.n, n_theta=spec.m0,
                                n_states=spec.n0, forward=spec.forward,
                                lw_a=spec.a, rng=rng)
    elif spec.name == "refilter_ffbs":
        draws = refilter_ffbs(model, y, spec.n, n_theta=spec.m0,
                              forward=spec.forward, lw_a=spec.a, rng=rng)
    elif spec.name == "mcmc":
        if model.lg_coeffs(np.zeros(model.n_params)) is not None:
            chain = gibbs_ffbs(model, y, spec.iterations, rng=rng)
        else:
            chain = single_site_mh(model, y, spec.iterations, rng=rng)
        draws = chain.draws
    else:
        raise ValueError(f"unknown algorithm '{spec.name}'")
    return _smoothed_summary(model, draws)


def _run_replication(config, rep):
    """One dataset end to end.  Returns a plain dict (pool-friendly)."""
    model = _build_model(config)
    theta = _true_params(config, model)
    _, y = simulate(model, theta, config.t_steps,
                    rng=sub_rng(config.seed, _DATASET_TAG, rep))
    ref_kind = _reference_kind(config)
    ref_means, ref_sds, ref_summary, _ = run_reference(
        model, y, ref_kind, config.reference_iterations,
        sub_rng(config.seed, _REFERENCE_TAG, rep),
    )
    out = {"rep": rep, "algorithms": {}, "errors": {}}
    for i, spec in enumerate(config.algorithms):
        rng = sub_rng(config.seed, _ALGO_TAG + i, rep)
        start = time.perf_counter()
        try:
            means, psum = run_algorithm(spec, model, y, rng)
            seconds = time.perf_counter() - start
            curve = standardized_errors(means, ref_means, ref_sds)
            out["algorithms"][spec.name] = {
                "curve": curve,
                "mae": float(np.mean(curve)),
                "maep": maep_star(psum, ref_summary),
                "seconds": seconds,
            }
        except Exception as exc:  # recorded per (rep, algorithm)
            out["errors"][spec.name] = f"{type(exc).__name__}: {exc}"
    if config.correlation_n > 0:
        history = storvik_filter(
            model, y, config.correlation_n,
            rng=sub_rng(config.seed, _CORRELATION_TAG, rep),
        )
        out["correlation"] = np.abs(state_param_correlation(history).corr)
    return out


@dataclass
class AlgorithmMetrics:
    algorithm: str
    mae_star: float
    maep_star: float
    seconds: float
    error_mean_curve: np.ndarray
    error_q95_curve: np.ndarray
    n_success: int
    n_failed: int
    per_dataset_mae: np.ndarray
    per_dataset_maep: np.ndarray
    error_curves: np.ndarray  # (n_success, T)


@dataclass
class MetricsReport:
    model: str
    t_steps: int
    replications: int
    algorithms: dict = field(default_factory=dict)
    correlations: np.ndarray | None = None  # (R, T, P) |corr|
    param_names: tuple = ()
    failures: list = field(default_factory=list)


def run_experiment(config):
    """Run the full protocol described by ``config``.

    Fails a whole run only when an algorithm succeeds on fewer than 80% of
    replications; individual failures are excluded from aggregates and
    recorded in the report and manifest.
    """
    config.validate()
    if config.budget_match:
        config, _ = match_budgets(config)
    reps = range(config.replications)
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_replication,
                                    [config] * config.replications, reps))
    else:
        results = [_run_replication(config, r) for r in reps]
    results.sort(key=lambda r: r["rep"])
    model = _build_model(config)
    report = MetricsReport(
        model=config.model,
        t_steps=config.t_steps,
        replications=config.replications,
        param_names=model.param_names,
    )
    for res in results:
        for name, message in res["errors"].items():
            report.failures.append((res["rep"], name, message))
    for spec in config.algorithms:
        rows = [r["algorithms"][spec.name] for r in results
                if spec.name in r["algorithms"]]
        n_failed = config.replications - len(rows)
        if len(rows) < 0.8 * config.replications:
            raise SmcError(
                f"algorithm '{spec.name}' failed on {n_failed} of "
                f"{config.replications} replications; "
                f"first error: {report.failures[0][2] if report.failures else '?'}"
            )
        curves = np.stack([r["curve"] for r in rows])
        report.algorithms[spec.name] = AlgorithmMetrics(
            algorithm=spec.name,
            mae_star=float(np.mean([r["mae"] for r in rows])),
            maep_star=float(np.mean([r["maep"] for r in rows])),
            seconds=float(np.mean([r["seconds"] for r in rows])),
            error_mean_curve=curves.mean(axis=0),
            error_q95_curve=np.quantile(curves, 0.95, axis=0),
            n_success=len(rows),
            n_failed=n_failed,
            per_dataset_mae=np.array([r["mae"] for r in rows]),
            per_dataset_maep=np.array([r["maep"] for r in rows]),
            error_curves=curves,
        )
    if config.correlation_n > 0:
        report.correlations = np.stack([r["correlation"] for r in results])
    if config.out_dir is not None:
        write_report(report, config)
    return report


# -- budget matching ------------------------------------------------------


def _scaled_spec(spec, factor):
    """Scale the linear-cost knob of an algorithm by ``factor``."""
    factor = float(np.clip(factor, 0.05, 20.0))
    if spec.name == "mcmc":
        return replace(spec, iterations=max(100, round(spec.iterations * factor)))
    m0 = spec.m0 if spec.m0 is not None else spec.n
    return replace(spec, m0=int(np.clip(round(m0 * factor), 10, spec.n)))


def _time_algorithm(spec, model, y, seed):
    start = time.perf_counter()
    run_algorithm(spec, model, y, sub_rng(seed, 99, 0))
    return time.perf_counter() - start


def match_budgets(config, rounds=4):
    """Calibrate per-algorithm budgets so measured runtimes agree within
    ``config.budget_tolerance`` of the slowest pilot run.

    Scales the draw-count knob (m0, or iterations for MCMC); the forward
    filter size n is the shared learning budget and stays fixed.  Results are
    machine-specific by design.
    """
    config.validate()
    model = _build_model(config)
    theta = _true_params(config, model)
    _, y = simulate(model, theta, config.t_steps,
                    rng=sub_rng(config.seed, _DATASET_TAG, 0))
    specs = list(config.algorithms)
    times = [_time_algorithm(s, model, y, config.seed) for s in specs]
    target = max(times)
    history = [dict(zip([s.name for s in specs], times))]
    for _ in range(rounds):
        spread = [abs(t - target) / target for t in times]
        if all(s <= config.budget_tolerance for s in spread):
            break
        specs = [
            s if abs(t - target) / target <= config.budget_tolerance
            else _scaled_spec(s, target / t)
            for s, t in zip(specs, times)
        ]
        times = [_time_algorithm(s, model, y, config.seed) for s in specs]
        history.append(dict(zip([s.name for s in specs], times)))
    matched = replace(config, algorithms=specs, budget_match=False)
    return matched, {"target_seconds": target, "pilot_times": history}


# -- artifacts ------------------------------------------------------------


def write_report(report, config):
    """Write metrics.csv, curves.csv, per_dataset.csv, correlations.csv (when
    present) and manifest.json under ``config.out_dir``."""
    import os

    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    inventory = []

    path = os.path.join(out, "metrics.csv")
    write_csv(
        path,
        ["algorithm", "mae_star", "maep_star", "seconds", "n_success",
         "n_failed"],
        [
            [m.algorithm, fmt(m.mae_star), fmt(m.maep_star), fmt(m.seconds),
             m.n_success, m.n_failed]
            for m in report.algorithms.values()
        ],
    )
    inventory.append("metrics.csv")

    header = ["t"]
    for name in report.algorithms:
        header += [f"{name}_mean", f"{name}_q95"]
    rows = []
    for i in range(report.t_steps):
        row = [i + 1]
        for m in report.algorithms.values():
            row += [fmt(m.error_mean_curve[i]), fmt(m.error_q95_curve[i])]
        rows.append(row)
    write_csv(os.path.join(out, "curves.csv"), header, rows)
    inventory.append("curves.csv")

    rows = []
    for name, m in report.algorithms.items():
        for j in range(m.n_success):
            rows.append([name, j, fmt(m.per_dataset_mae[j]),
                         fmt(m.per_dataset_maep[j])])
    write_csv(os.path.join(out, "per_dataset.csv"),
              ["algorithm", "run", "mae_star", "maep_star"], rows)
    inventory.append("per_dataset.csv")

    if report.correlations is not None:
        mean_corr = report.correlations.mean(axis=0)
        header = ["t"] + [f"abs_corr_{n}" for n in report.param_names]
        rows = [[i + 1] + [fmt(v) for v in mean_corr[i]]
                for i in range(mean_corr.shape[0])]
        write_csv(os.path.join(out, "correlations.csv"), header, rows)
        inventory.append("correlations.csv")

    cfg = asdict(config)
    cfg["true_params"] = (None if config.true_params is None
                          else list(config.true_params))
    manifest = {
        "config": cfg,
        "failures": [list(f) for f in report.failures],
        "inventory": inventory,
        "seconds": {name: m.seconds for name, m in report.algorithms.items()},
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
