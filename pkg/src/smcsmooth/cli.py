"""Command-line interface.

Subcommands: simulate, filter, smooth, mcmc, evidence, bench, correlate, sv.
Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import (
    AlgorithmSpec,
    experiment_config_from_mapping,
    load_experiment_config,
)
from .dataio import (
    chain_trace_csv,
    draws_summary_csv,
    fmt,
    history_summary_csv,
    ingest_returns,
    load_dataset,
    save_dataset,
    save_draws,
    save_history,
    write_csv,
)
from .errors import (
    DataError,
    DegenerateWeightsError,
    NumericalDegeneracyError,
    SmcError,
)
from .evidence import harmonic_mean_log_marginal, smc_log_marginal
from .filters import bootstrap_filter, liu_west_filter, storvik_filter
from .harness import run_experiment
from .mcmc import gibbs_ffbs, single_site_mh
from .metrics import state_param_correlation
from .models import MODEL_CLASSES, get_model, simulate
from .smoothers import (
    fit_joint_gaussian,
    godsill_backward,
    pls_smooth,
    plsa_smooth,
    refilter_ffbs,
    refilter_smooth,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p, *, model=True, out=True):
    if model:
        p.add_argument("--model", choices=sorted(MODEL_CLASSES), required=True)
    p.add_argument("--seed", type=int, default=0)
    if out:
        p.add_argument("--out", default=".", help="output directory")


def _parse_theta(model, text):
    if text is None:
        return np.asarray(model.default_true_params, dtype=float)
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise DataError(f"cannot parse --theta '{text}'") from None
    if len(values) != model.n_params:
        raise DataError(
            f"--theta needs {model.n_params} values "
            f"({', '.join(model.param_names)})"
        )
    return np.asarray(values)


def _outpath(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def build_parser():
    parser = _Parser(prog="smcsmooth")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[], help="simulate a dataset")
    _add_common(p)
    p.add_argument("--t", type=int, default=100)
    p.add_argument("--theta", help="comma-separated true parameters")
    p.add_argument("--x0", type=float)

    p = sub.add_parser("filter", help="run a forward filter")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--algorithm", default="storvik",
                   choices=["bootstrap", "storvik", "liu_west"])
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--theta", help="required for bootstrap")
    p.add_argument("--lw-a", type=float, default=0.974)

    p = sub.add_parser("smooth", help="run a smoothing algorithm")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--algorithm", default="refilter",
                   choices=["pls", "plsa", "refilter", "refilter_ffbs",
                            "godsill"])
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--n0", type=int, help="states per conditional filter")
    p.add_argument("--m0", type=int, help="parameter draws / trajectories")
    p.add_argument("--theta", help="required for godsill")
    p.add_argument("--forward", default="storvik",
                   choices=["storvik", "liu_west"])
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--per-draw", action="store_true",
                   help="write per-draw trajectory columns")

    p = sub.add_parser("mcmc", help="run a reference MCMC chain")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--algorithm", default="auto",
                   choices=["auto", "gibbs_ffbs", "single_site"])
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--burnin", type=int)

    p = sub.add_parser("evidence",
                       help="log marginal likelihood table (CSV to stdout)")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--n", default="1000,5000,10000,50000",
                   help="comma list of particle counts")
    p.add_argument("--mcmc-iterations", default="",
                   help="comma list of chain lengths for the harmonic mean")

    p = sub.add_parser("bench", help="run a benchmark experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")

    p = sub.add_parser("correlate",
                       help="state-parameter correlation diagnostic")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--n", type=int, default=5000)

    p = sub.add_parser("sv", help="volatility pipeline on price/return data")
    p.add_argument("--prices", help="CSV with date,price columns")
    p.add_argument("--returns", help="CSV with date,return columns")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--n0", type=int, default=1000)
    p.add_argument("--m0", type=int, default=1000)
    p.add_argument("--iterations", type=int, default=0,
                   help="add a single-site MCMC comparison when > 0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")
    return parser


def _cmd_simulate(args):
    model = get_model(args.model, **({"x0": args.x0} if args.x0 is not None
                                     else {}))
    theta = _parse_theta(model, args.theta)
    states, y = simulate(model, theta, args.t, rng=args.seed)
    path = _outpath(args, f"{args.model}_dataset.csv")
    save_dataset(path, y, states)
    print(path)
    return 0


def _load_y(args, model):
    y, _ = load_dataset(args.data)
    if model.integer_obs:
        y = np.asarray(y, dtype=np.int64)
    return y


def _cmd_filter(args):
    model = get_model(args.model)
    y = _load_y(args, model)
    if args.algorithm == "bootstrap":
        theta = _parse_theta(model, args.theta)
        history = bootstrap_filter(model, theta, y, args.n, rng=args.seed)
    elif args.algorithm == "storvik":
        history = storvik_filter(model, y, args.n, rng=args.seed)
    else:
        history = liu_west_filter(model, y, args.n, a=args.lw_a,
                                  rng=args.seed)
    base = f"{args.model}_{args.algorithm}"
    save_history(history, _outpath(args, base + "_history.npz"))
    history_summary_csv(history, _outpath(args, base + "_summary.csv"))
    print(_outpath(args, base + "_summary.csv"))
    return 0


def _cmd_smooth(args):
    model = get_model(args.model)
    y = _load_y(args, model)
    rng = np.random.default_rng(args.seed)
    if args.algorithm == "godsill":
        theta = _parse_theta(model, args.theta)
        history = bootstrap_filter(model, theta, y, args.n, rng=rng)
        paths = godsill_backward(model, theta, history, rng=rng,
                                 size=args.m0 or args.n)
        from .smoothers import SmoothingDraws

        draws = SmoothingDraws(paths, None, "godsill",
                               {"n_filter": args.n})
    elif args.algorithm in ("pls", "plsa"):
        history = storvik_filter(model, y, args.n, rng=rng)
        if args.algorithm == "pls":
            draws = pls_smooth(model, history, n_draws=args.m0, rng=rng)
        else:
            approx = fit_joint_gaussian(history)
            draws = plsa_smooth(model, history, approx, n_draws=args.m0,
                                rng=rng)
    elif args.algorithm == "refilter":
        draws = refilter_smooth(model, y, args.n, n_theta=args.m0,
                                n_states=args.n0, forward=args.forward,
                                rng=rng, workers=args.workers)
    else:
        draws = refilter_ffbs(model, y, args.n, n_theta=args.m0,
                              forward=args.forward, rng=rng)
    base = f"{args.model}_{args.algorithm}"
    save_draws(draws, _outpath(args, base + "_draws.npz"))
    draws_summary_csv(draws, _outpath(args, base + "_smooth.csv"),
                      per_draw=args.per_draw)
    print(_outpath(args, base + "_smooth.csv"))
    return 0


def _cmd_mcmc(args):
    model = get_model(args.model)
    y = _load_y(args, model)
    kind = args.algorithm
    if kind == "auto":
        kind = "gibbs_ffbs" if args.model == "ar1" else "single_site"
    kwargs = {"burn_in": args.burnin} if args.burnin is not None else {}
    if kind == "gibbs_ffbs":
        chain = gibbs_ffbs(model, y, args.iterations, rng=args.seed, **kwargs)
    else:
        chain = single_site_mh(model, y, args.iterations, rng=args.seed,
                               **kwargs)
    base = f"{args.model}_mcmc"
    chain_trace_csv(chain, model.param_names,
                    _outpath(args, base + "_trace.csv"))
    draws_summary_csv(chain.draws, _outpath(args, base + "_smooth.csv"))
    print(_outpath(args, base + "_smooth.csv"))
    return 0


def _cmd_evidence(args):
    model = get_model(args.model)
    y = _load_y(args, model)
    rows = []
    for i, n in enumerate(int(v) for v in args.n.split(",") if v):
        history = storvik_filter(model, y, n, rng=[args.seed, 1, i],
                                 store="final")
        rows.append(["smc", n, fmt(smc_log_marginal(history).log_marginal)])
    if args.mcmc_iterations:
        for i, n in enumerate(int(v) for v in args.mcmc_iterations.split(",")):
            if model.lg_coeffs(np.zeros(model.n_params)) is not None:
                chain = gibbs_ffbs(model, y, n, rng=[args.seed, 2, i])
            else:
                chain = single_site_mh(model, y, n, rng=[args.seed, 2, i])
            est = harmonic_mean_log_marginal(chain, model, y)
            rows.append(["harmonic_mean", n, fmt(est.log_marginal)])
    print("method,n,log_marginal")
    for row in rows:
        print(",".join(str(v) for v in row))
    if args.out != ".":
        write_csv(_outpath(args, "evidence.csv"),
                  ["method", "n", "log_marginal"], rows)
    return 0


def _cmd_bench(args):
    config = load_experiment_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.workers is not None:
        config.workers = args.workers
    if args.out is not None:
        config.out_dir = args.out
    report = run_experiment(config)
    print("algorithm,mae_star,maep_star,seconds")
    for name, m in report.algorithms.items():
        print(f"{name},{m.mae_star:.6f},{m.maep_star:.6f},{m.seconds:.3f}")
    return 0


def _cmd_correlate(args):
    model = get_model(args.model)
    y = _load_y(args, model)
    history = storvik_filter(model, y, args.n, rng=args.seed)
    diag = state_param_correlation(history)
    path = _outpath(args, f"{args.model}_correlation.csv")
    header = ["t"] + [f"corr_{n}" for n in diag.names]
    rows = [[i + 1] + [fmt(v) for v in diag.corr[i]]
            for i in range(diag.corr.shape[0])]
    write_csv(path, header, rows)
    print(path)
    return 0


def _cmd_sv(args):
    if bool(args.prices) == bool(args.returns):
        raise DataError("give exactly one of --prices or --returns")
    series = ingest_returns(args.prices or args.returns)
    model = get_model("sv")
    y = series.values
    os.makedirs(args.out, exist_ok=True)
    history = storvik_filter(model, y, args.n, rng=[args.seed, 1])
    history_summary_csv(history, os.path.join(args.out, "sv_filter.csv"))
    draws = refilter_smooth(model, y, args.n, n_theta=args.m0,
                            n_states=args.n0, rng=[args.seed, 2])
    draws_summary_csv(draws, os.path.join(args.out, "sv_refilter_smooth.csv"))
    outputs = ["sv_filter.csv", "sv_refilter_smooth.csv"]
    if args.iterations > 0:
        chain = single_site_mh(model, y, args.iterations, rng=[args.seed, 3])
        chain_trace_csv(chain, model.param_names,
                        os.path.join(args.out, "sv_mcmc_trace.csv"))
        draws_summary_csv(chain.draws,
                          os.path.join(args.out, "sv_mcmc_smooth.csv"))
        outputs += ["sv_mcmc_trace.csv", "sv_mcmc_smooth.csv"]
    for name in outputs:
        print(os.path.join(args.out, name))
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "filter": _cmd_filter,
    "smooth": _cmd_smooth,
    "mcmc": _cmd_mcmc,
    "evidence": _cmd_evidence,
    "bench": _cmd_bench,
    "correlate": _cmd_correlate,
    "sv": _cmd_sv,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DataError as exc:
        print(f"smcsmooth: data error: {exc}", file=sys.stderr)
        return 2
    except (DegenerateWeightsError, NumericalDegeneracyError) as exc:
        print(f"smcsmooth: numerical degeneracy: {exc}", file=sys.stderr)
        return 3
    except SmcError as exc:
        print(f"smcsmooth: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"smcsmooth: {exc}", file=sys.stderr)
        return 2


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
