"""Reference posteriors: FFBS-based Gibbs for linear-Gaussian models and
single-site Metropolis-within-Gibbs for the nonlinear models.

Both samplers alternate a state block with exact conjugate parameter draws
(batch posterior of the full trajectory, then one draw).  Chains are strictly
sequential; run several seeds in parallel tasks for multi-chain checks.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .filters import kalman_filter
from .smoothers import SmoothingDraws, ffbs_draw


@dataclass
class McmcChain:
    """Post burn-in, thinned draws plus bookkeeping."""

    draws: SmoothingDraws
    acceptance: dict
    burn_in: int
    iterations: int
    thin: int = 1


def _kept(iterations, burn_in, thin):
    return len(range(burn_in, iterations, thin))


def _theta_given_states(model, x0, states, y, rng):
    """Exact conjugate parameter draw given a full state trajectory."""
    path = np.concatenate([[x0], states])
    suff = model.batch_posterior(path, y)
    return model.sample_params(suff, rng), suff


def gibbs_ffbs(model, y, iterations, *, burn_in=None, thin=1, rng=None,
               x0=None, init_params=None):
    """Gibbs sampler alternating joint FFBS state draws with conjugate
    parameter draws.  Requires linear-Gaussian coefficients."""
    rng = np.random.default_rng(rng)
    y = np.asarray(y, dtype=float)
    if burn_in is None:
        burn_in = iterations // 10
    if not 0 <= burn_in < iterations:
        raise ValueError("burn_in must lie in [0, iterations)")
    x0v = model.x0 if x0 is None else float(x0)
    if model.lg_coeffs(np.zeros(model.n_params)) is None:
        raise DataError(
            f"model '{model.name}' exposes no linear-Gaussian coefficients"
        )
    if init_params is None:
        theta = model.sample_params(model.prior_suffstats(), rng)
    else:
        theta = np.asarray(init_params, dtype=float)
    update_theta = model.fixed_params is None
    n_keep = _kept(iterations, burn_in, thin)
    states_out = np.empty((n_keep, len(y)))
    params_out = np.empty((n_keep, model.n_params))
    k = 0
    for it in range(iterations):
        lg = model.lg_coeffs(theta)
        moments, _ = kalman_filter(lg.f, lg.g, lg.v, lg.w, x0v, 0.0, y,
                                   trans_offset=lg.trans_offset,
                                   obs_offset=lg.obs_offset)
        x = ffbs_draw(moments, lg.g, rng)
        if update_theta:
            theta, _ = _theta_given_states(model, x0v, x, y, rng)
        if it >= burn_in and (it - burn_in) % thin == 0:
            states_out[k] = x
            params_out[k] = theta
            k += 1
    draws = SmoothingDraws(states_out, params_out, "gibbs_ffbs",
                           {"iterations": iterations, "burn_in": burn_in})
    return McmcChain(draws, {"states": 1.0, "params": 1.0}, burn_in,
                     iterations, thin)


def single_site_mh(model, y, iterations, *, burn_in=None, thin=1,
                   proposal_sd=1.0, adapt=True, rng=None, x0=None,
                   init_states=None, adapt_window=50):
    """Metropolis-within-Gibbs with random-walk updates of one state at a
    time plus conjugate parameter draws.

    Sites are swept in an even/odd order so a sweep vectorizes; each site's
    conditional is p(x_t | x_{t-1}) p(x_{t+1} | x_t) p(y_t | x_t).  Per-site
    proposal scales adapt toward a 0.3-0.5 acceptance rate during burn-in and
    are frozen afterwards.  States are initialized from a crude transform of
    the observations unless given.
    """
    if proposal_sd <= 0:
        raise ValueError("proposal_sd must be positive")
    rng = np.random.default_rng(rng)
    y = np.asarray(y)
    n_steps = len(y)
    if burn_in is None:
        burn_in = iterations // 10
    if not 0 <= burn_in < iterations:
        raise ValueError("burn_in must lie in [0, iterations)")
    x0v = model.x0 if x0 is None else float(x0)
    if init_states is None:
        x = model.init_states_from_obs(y).astype(float).copy()
    else:
        x = np.asarray(init_states, dtype=float).copy()
        if x.shape != (n_steps,):
            raise DataError("init_states must match the observation length")
    theta, _ = _theta_given_states(model, x0v, x, y, rng)
    update_theta = model.fixed_params is None
    sd = np.full(n_steps, float(proposal_sd))
    sites = np.arange(n_steps)
    groups = (sites[::2], sites[1::2])
    times = sites + 1
    window_acc = np.zeros(n_steps)
    window_sweeps = 0
    post_acc = 0.0
    post_total = 0
    n_keep = _kept(iterations, burn_in, thin)
    states_out = np.empty((n_keep, n_steps))
    params_out = np.empty((n_keep, model.n_params))
    k = 0
    for it in range(iterations):
        for group in groups:
            left = np.where(group == 0, x0v, x[np.maximum(group - 1, 0)])
            has_right = group < n_steps - 1
            right = x[np.minimum(group + 1, n_steps - 1)]
            cur = x[group]
            prop = cur + sd[group] * rng.standard_normal(group.size)
            t_here = times[group]

            def local(val):
                lp = model.transition_logpdf(val, left, theta, t_here)
                lp = lp + model.observation_logpdf(y[group], val, theta,
                                                   t_here)
                lp_right = model.transition_logpdf(right, val, theta,
                                                   t_here + 1)
                return lp + np.where(has_right, lp_right, 0.0)

            accept = np.log(rng.random(group.size)) < local(prop) - local(cur)
            x[group[accept]] = prop[accept]
            window_acc[group] += accept
            if it >= burn_in:
                post_acc += accept.sum()
                post_total += accept.size
        if update_theta:
            theta, _ = _theta_given_states(model, x0v, x, y, rng)
        window_sweeps += 1
        if window_sweeps == adapt_window:
            if window_acc.sum() == 0:
                warnings.warn(
                    f"single-site chain accepted nothing over {adapt_window} "
                    "sweeps; it may be stuck",
                    RuntimeWarning,
                    stacklevel=2,
                )
            if adapt and it < burn_in:
                rate = window_acc / adapt_window
                sd *= np.where(rate < 0.3, 0.7,
                               np.where(rate > 0.5, 1.4, 1.0))
            window_acc[:] = 0.0
            window_sweeps = 0
        if it >= burn_in and (it - burn_in) % thin == 0:
            states_out[k] = x
            params_out[k] = theta
            k += 1
    acc_rate = post_acc / post_total if post_total else 0.0
    draws = SmoothingDraws(states_out, params_out, "single_site_mh",
                           {"iterations": iterations, "burn_in": burn_in})
    return McmcChain(draws, {"states": float(acc_rate), "params": 1.0},
                     burn_in, iterations, thin)
