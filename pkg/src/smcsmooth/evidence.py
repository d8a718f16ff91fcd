"""Marginal-likelihood estimation from filter output and from MCMC draws.

The SMC estimate totals the stored predictive log-normalizing increments,
log(sum_j w_t^j) - log N per step with w_t^j the observation densities of
particles propagated from the t-1 posterior.  The harmonic-mean estimate
inverts the average inverse complete-data likelihood of posterior draws; its
instability relative to the SMC estimate is a documented finding, not an
error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DataError


@dataclass
class EvidenceEstimate:
    log_marginal: float
    method: str
    n: int
    increments: np.ndarray | None = None


def smc_log_marginal(history):
    """Total the per-step increments of a filter history."""
    if history.log_increments is None:
        raise DataError(
            "evidence increments unavailable: the history was thinned"
        )
    increments = np.asarray(history.log_increments, dtype=float)
    return EvidenceEstimate(
        log_marginal=float(np.sum(increments)),
        method="smc",
        n=history.n_particles,
        increments=increments,
    )


def complete_data_log_likelihood(model, y, states, params):
    """log p(y | x^T, theta) for each draw: observation densities only."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    params = np.atleast_2d(np.asarray(params, dtype=float))
    y = np.asarray(y)
    if states.shape[1] != len(y):
        raise DataError("state draws and observations differ in length")
    ll = np.zeros(states.shape[0])
    for t in range(1, len(y) + 1):
        ll += model.observation_logpdf(y[t - 1], states[:, t - 1], params, t)
    return ll


def harmonic_mean_log_marginal(chain, model, y):
    """Harmonic-mean estimate from joint (x^T, theta) MCMC draws."""
    draws = chain.draws
    if draws.params is None:
        raise DataError("harmonic mean needs parameter draws in the chain")
    ll = complete_data_log_likelihood(model, y, draws.trajectories,
                                      draws.params)
    n = len(ll)
    log_marginal = math.log(n) - float(logsumexp(-ll))
    return EvidenceEstimate(log_marginal, "harmonic_mean", n)
