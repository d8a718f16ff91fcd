"""File formats: CSV artifacts, the npz columnar layout for filter histories
and smoothing draws, dataset files, and price/return ingestion.

Floats are printed with 17 significant digits so every CSV round-trips to the
exact same float64.  The npz layout for a history holds ``states`` (T, N),
``log_weights`` (T, N), optional ``params`` (T, N, P) and ``suffstats``
(T, N, S), ``increments`` (T,), ``cloud_ts`` (the time index of each stored
cloud) and a JSON ``meta`` string (model, method, parameter blocks, theta,
x0, thinned flag).  Smoothing draws store ``trajectories`` (M, T), optional
``params`` (M, P) and a JSON ``meta`` string.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .filters import FilterHistory, ParticleCloud
from .models import ParamBlock
from .smoothers import SmoothingDraws


def fmt(x):
    """Format a float with enough digits to round-trip float64."""
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def weighted_quantiles(values, weights, qs):
    order = np.argsort(values)
    v = np.asarray(values, dtype=float)[order]
    w = np.asarray(weights, dtype=float)[order]
    cum = np.cumsum(w) - 0.5 * w
    cum /= np.sum(w)
    return np.interp(qs, cum, v)


# -- datasets -----------------------------------------------------------


def save_dataset(path, y, states=None):
    header = ["t", "y"] + (["x"] if states is not None else [])
    rows = []
    for i, yi in enumerate(y):
        row = [i + 1, fmt(yi)]
        if states is not None:
            row.append(fmt(states[i]))
        rows.append(row)
    write_csv(path, header, rows)


def load_dataset(path):
    """Read a dataset CSV; returns (y, states-or-None)."""
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if "y" not in header:
            raise DataError(f"{path}: no 'y' column in header {header}")
        y_col = header.index("y")
        x_col = header.index("x") if "x" in header else None
        ys, xs = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ys.append(float(row[y_col]))
                if x_col is not None:
                    xs.append(float(row[x_col]))
            except (ValueError, IndexError):
                raise DataError(f"{path}: bad row at line {lineno}") from None
    y = np.asarray(ys)
    if np.all(np.floor(y) == y):
        y = y.astype(np.int64) if np.all(np.abs(y) < 2**62) else y
    return y, (np.asarray(xs) if x_col is not None else None)


# -- price/return ingestion ---------------------------------------------


@dataclass
class ReturnSeries:
    values: np.ndarray
    dates: list


def ingest_returns(path):
    """Read a CSV with columns (date, price) or (date, return).

    Prices are converted to log-returns log(P_t / P_{t-1}); a precomputed
    return column is accepted verbatim.  Non-monotone dates warn; a
    non-positive price is a row error naming the line.
    """
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if "date" not in header:
            raise DataError(f"{path}: no 'date' column in header {header}")
        date_col = header.index("date")
        if "return" in header:
            value_col, is_price = header.index("return"), False
        elif "price" in header:
            value_col, is_price = header.index("price"), True
        else:
            raise DataError(
                f"{path}: need a 'price' or 'return' column, got {header}"
            )
        dates, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                value = float(row[value_col])
            except (ValueError, IndexError):
                raise DataError(f"{path}: bad row at line {lineno}") from None
            if is_price and not value > 0:
                raise DataError(
                    f"{path}: non-positive price at line {lineno}"
                )
            dates.append(row[date_col].strip())
            values.append(value)
    if any(b <= a for a, b in zip(dates, dates[1:])):
        warnings.warn(f"{path}: dates are not strictly increasing",
                      stacklevel=2)
    values = np.asarray(values, dtype=float)
    if is_price:
        if len(values) < 2:
            raise DataError(f"{path}: need at least two prices")
        returns = np.log(values[1:] / values[:-1])
        return ReturnSeries(returns, dates[1:])
    return ReturnSeries(values, dates)


# -- filter histories ----------------------------------------------------


def save_history(history, path):
    arrays = {
        "states": np.stack([c.states for c in history.clouds]),
        "log_weights": np.stack([c.log_weights for c in history.clouds]),
        "cloud_ts": np.array([c.t for c in history.clouds]),
    }
    if history.clouds[0].params is not None:
        arrays["params"] = np.stack([c.params for c in history.clouds])
    if history.clouds[0].suffstats is not None:
        arrays["suffstats"] = np.stack([c.suffstats for c in history.clouds])
    if history.log_increments is not None:
        arrays["increments"] = history.log_increments
    meta = {
        "model_name": history.model_name,
        "method": history.method,
        "n_particles": history.n_particles,
        "param_blocks": [[b.name, b.support] for b in history.param_blocks],
        "theta": None if history.theta is None else list(history.theta),
        "thinned": history.thinned,
        "x0": history.x0,
    }
    np.savez_compressed(path, meta=json.dumps(meta), **arrays)


def load_history(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        states = data["states"]
        log_weights = data["log_weights"]
        cloud_ts = data["cloud_ts"]
        params = data["params"] if "params" in data else None
        suffstats = data["suffstats"] if "suffstats" in data else None
        increments = data["increments"] if "increments" in data else None
    clouds = [
        ParticleCloud(
            t=int(cloud_ts[i]),
            states=states[i],
            log_weights=log_weights[i],
            params=None if params is None else params[i],
            suffstats=None if suffstats is None else suffstats[i],
        )
        for i in range(len(cloud_ts))
    ]
    return FilterHistory(
        model_name=meta["model_name"],
        clouds=clouds,
        log_increments=increments,
        n_particles=int(meta["n_particles"]),
        method=meta["method"],
        param_blocks=tuple(ParamBlock(n, s) for n, s in meta["param_blocks"]),
        theta=None if meta["theta"] is None else np.asarray(meta["theta"]),
        thinned=bool(meta["thinned"]),
        x0=float(meta["x0"]),
    )


_QS = (0.025, 0.5, 0.975)
_QLABELS = ("q025", "q500", "q975")


def _summary_cols(prefix):
    return [f"{prefix}_{s}" for s in ("mean", "sd", *_QLABELS)]


def _summarize(values, weights):
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    mean = float(w @ values)
    sd = float(np.sqrt(w @ (values - mean) ** 2))
    qs = weighted_quantiles(values, w, _QS)
    return [mean, sd, *qs]


def history_summary_csv(history, path):
    """Per-step mean, sd and quantiles of the state and each parameter."""
    names = history.param_names()
    header = ["t"] + _summary_cols("state")
    for name in names:
        header += _summary_cols(name)
    rows = []
    for cloud in history.clouds:
        w = cloud.weights()
        row = [cloud.t] + [fmt(v) for v in _summarize(cloud.states, w)]
        if cloud.params is not None:
            for k in range(cloud.params.shape[1]):
                row += [fmt(v) for v in _summarize(cloud.params[:, k], w)]
        rows.append(row)
    write_csv(path, header, rows)


# -- smoothing draws -----------------------------------------------------


def save_draws(draws, path):
    arrays = {"trajectories": draws.trajectories}
    if draws.params is not None:
        arrays["params"] = draws.params
    meta = {"method": draws.method, "provenance": draws.provenance}
    np.savez_compressed(path, meta=json.dumps(meta, default=str), **arrays)


def load_draws(path):
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        trajectories = data["trajectories"]
        params = data["params"] if "params" in data else None
    return SmoothingDraws(trajectories, params, meta["method"],
                          meta.get("provenance", {}))


def draws_summary_csv(draws, path, per_draw=False):
    """Per-step mean and quantiles of the smoothed state; optionally one
    column per trajectory draw."""
    header = ["t", "mean", *_QLABELS]
    if per_draw:
        header += [f"draw{m}" for m in range(draws.n_draws)]
    rows = []
    traj = draws.trajectories
    qs = np.quantile(traj, _QS, axis=0)
    means = traj.mean(axis=0)
    for i in range(draws.n_steps):
        row = [i + 1, fmt(means[i])] + [fmt(q) for q in qs[:, i]]
        if per_draw:
            row += [fmt(v) for v in traj[:, i]]
        rows.append(row)
    write_csv(path, header, rows)


def chain_trace_csv(chain, names, path):
    """Parameter trace of an MCMC chain: iteration index plus one column per
    parameter block."""
    params = chain.draws.params
    header = ["iteration"] + list(names)
    rows = [
        [chain.burn_in + i * chain.thin] + [fmt(v) for v in params[i]]
        for i in range(params.shape[0])
    ]
    write_csv(path, header, rows)
