"""Benchmark metrics: standardized state errors (MAE*), standardized
parameter errors (MAEP*), and the per-step state-parameter correlation
diagnostic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, MetricError
from .models import transform_columns


def standardized_errors(est_means, ref_means, ref_sds):
    """|est - ref| / ref_sd per time step against a reference posterior."""
    est = np.asarray(est_means, dtype=float)
    ref = np.asarray(ref_means, dtype=float)
    sds = np.asarray(ref_sds, dtype=float)
    if not est.shape == ref.shape == sds.shape:
        raise DataError("estimate, reference and sd arrays must align")
    bad = np.flatnonzero(~(sds > 0))
    if bad.size:
        raise MetricError(f"zero reference sd at t={int(bad[0]) + 1}")
    return np.abs(est - ref) / sds


def mae_star(est_means, ref_means, ref_sds):
    return float(np.mean(standardized_errors(est_means, ref_means, ref_sds)))


@dataclass
class ParamSummary:
    """Posterior means and sds of named parameter blocks."""

    names: tuple
    means: np.ndarray
    sds: np.ndarray

    @classmethod
    def from_draws(cls, names, draws, weights=None):
        draws = np.asarray(draws, dtype=float)
        if weights is None:
            means = draws.mean(axis=0)
            sds = draws.std(axis=0, ddof=1)
        else:
            w = np.asarray(weights, dtype=float)
            w = w / w.sum()
            means = w @ draws
            centered = draws - means
            sds = np.sqrt(w @ (centered * centered))
        return cls(tuple(names), means, sds)


def maep_star(est, ref):
    """Mean over parameters of |est mean - ref mean| / ref posterior sd."""
    if tuple(est.names) != tuple(ref.names):
        raise DataError(
            f"parameter blocks differ: {est.names} vs {ref.names}"
        )
    bad = np.flatnonzero(~(ref.sds > 0))
    if bad.size:
        raise MetricError(
            f"zero reference sd for parameter '{ref.names[int(bad[0])]}'"
        )
    return float(np.mean(np.abs(est.means - ref.means) / ref.sds))


@dataclass
class CorrelationDiagnostic:
    """Weighted correlation of the state with each transformed parameter,
    per time step.  Degenerate (zero-variance) entries are reported as 0 and
    flagged."""

    corr: np.ndarray        # (T, P)
    names: tuple
    degenerate: np.ndarray  # (T, P) bool


def state_param_correlation(history):
    history._require_full()
    if history.clouds[0].params is None:
        raise DataError("correlation diagnostic needs parameter draws")
    blocks = history.param_blocks
    n_steps = len(history.clouds)
    n_params = history.clouds[0].params.shape[1]
    corr = np.zeros((n_steps, n_params))
    degenerate = np.zeros((n_steps, n_params), dtype=bool)
    for i, cloud in enumerate(history.clouds):
        w = cloud.weights()
        eta = transform_columns(cloud.params, blocks)
        scale_x = w @ (cloud.states * cloud.states)
        scale_eta = w @ (eta * eta)
        x = cloud.states - w @ cloud.states
        eta = eta - w @ eta
        var_x = w @ (x * x)
        var_eta = w @ (eta * eta)
        cov = (w * x) @ eta
        # a column of identical values leaves rounding noise, not variance
        ok = (var_x > 1e-24 * (scale_x + 1.0)) \
            & (var_eta > 1e-24 * (scale_eta + 1.0))
        corr[i, ok] = cov[ok] / np.sqrt(var_x * var_eta[ok])
        degenerate[i] = ~ok
    return CorrelationDiagnostic(corr, history.param_names(), degenerate)
