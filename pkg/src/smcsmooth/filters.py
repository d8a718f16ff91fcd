"""Forward passes: resampling, bootstrap SIR, Storvik's conjugate learning
filter, the Liu-West kernel filter, and an exact Kalman filter.

Filters return a :class:`FilterHistory` holding the per-step particle clouds
(post-resampling, so stored weights are uniform unless an ESS gate skipped the
resample) together with the per-step predictive log-normalizing increments
that the evidence module sums.  All weight arithmetic is done in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DataError,
    DegenerateWeightsError,
    NumericalDegeneracyError,
)
from .models import LOG_2PI, ParamBlock

RESAMPLING_SCHEMES = ("multinomial", "systematic", "stratified")


def ess(log_weights):
    """Effective sample size of normalized or unnormalized log weights."""
    lw = np.asarray(log_weights, dtype=float)
    lw = lw - logsumexp(lw)
    return float(np.exp(-logsumexp(2.0 * lw)))


def resample(log_weights, scheme="systematic", rng=None, t=None):
    """Draw N ancestor indices from N log weights.

    Counts of index i have expectation N * w_i under every scheme; systematic
    and stratified use a common/stratified uniform grid, multinomial draws iid.
    """
    rng = np.random.default_rng(rng)
    lw = np.asarray(log_weights, dtype=float)
    if lw.ndim != 1 or lw.size == 0:
        raise DataError("log_weights must be a nonempty 1-d array")
    m = np.max(lw)
    if not np.isfinite(m):
        raise DegenerateWeightsError(t)
    w = np.exp(lw - m)
    w /= w.sum()
    n = w.size
    if scheme == "systematic":
        pos = (rng.random() + np.arange(n)) / n
    elif scheme == "stratified":
        pos = (rng.random(n) + np.arange(n)) / n
    elif scheme == "multinomial":
        pos = rng.random(n)
    else:
        raise ValueError(f"unknown resampling scheme '{scheme}'")
    cum = np.cumsum(w)
    cum[-1] = 1.0
    return np.minimum(np.searchsorted(cum, pos, side="right"), n - 1)


@dataclass
class ParticleCloud:
    """Weighted particle approximation at one time step."""

    t: int
    states: np.ndarray
    log_weights: np.ndarray
    params: np.ndarray | None = None
    suffstats: np.ndarray | None = None
    normalized: bool = True

    @property
    def n(self):
        return self.states.shape[0]

    def weights(self):
        w = np.exp(self.log_weights - np.max(self.log_weights))
        return w / w.sum()

    def ess(self):
        return ess(self.log_weights)


@dataclass
class FilterHistory:
    """Stored output of a forward pass.

    ``log_increments[t-1]`` is log p_hat(y_t | y^{t-1}); it is ``None`` for
    thinned histories (cloud thinning discards the evidence record, see
    dataio docs).  ``ancestry`` holds the per-step resampling index arrays
    when requested.
    """

    model_name: str
    clouds: list[ParticleCloud]
    log_increments: np.ndarray | None
    n_particles: int
    method: str
    param_blocks: tuple[ParamBlock, ...] = ()
    theta: np.ndarray | None = None
    ancestry: list[np.ndarray] | None = None
    thinned: bool = False
    x0: float = 0.0

    @property
    def n_steps(self):
        if self.log_increments is not None:
            return len(self.log_increments)
        return self.clouds[-1].t if self.clouds else 0

    @property
    def final(self):
        return self.clouds[-1]

    def _require_full(self):
        if self.thinned or len(self.clouds) != self.n_steps:
            raise DataError(
                "this operation needs a full (unthinned) filter history"
            )

    def states_matrix(self):
        self._require_full()
        return np.stack([c.states for c in self.clouds])

    def log_weights_matrix(self):
        self._require_full()
        return np.stack([c.log_weights for c in self.clouds])

    def params_matrix(self):
        self._require_full()
        if self.clouds[0].params is None:
            raise DataError("history carries no parameter draws")
        return np.stack([c.params for c in self.clouds])

    def param_names(self):
        return tuple(b.name for b in self.param_blocks)


def _parse_store(store):
    if store == "full":
        return None, False
    if store == "final":
        return "final", False
    if isinstance(store, int) and store >= 1:
        return store, True
    raise ValueError("store must be 'full', 'final', or a positive int stride")


class _HistoryBuilder:
    def __init__(self, model, n_particles, method, n_steps, store, theta=None,
                 ancestry=False, x0=0.0):
        self.keep, self.thinned = _parse_store(store)
        self.clouds = []
        self.increments = None if self.thinned else np.empty(n_steps)
        self.ancestry = [] if ancestry else None
        self.meta = dict(
            model_name=model.name,
            n_particles=n_particles,
            method=method,
            param_blocks=model.param_blocks,
            theta=None if theta is None else np.asarray(theta, dtype=float),
            thinned=self.thinned,
            x0=model.x0 if x0 is None else float(x0),
        )
        self.n_steps = n_steps

    def add(self, t, increment, cloud, idx):
        if self.increments is not None:
            self.increments[t - 1] = increment
        if self.ancestry is not None:
            self.ancestry.append(idx)
        if self.keep is None:
            self.clouds.append(cloud)
        elif self.keep == "final":
            if t == self.n_steps:
                self.clouds.append(cloud)
        elif t % self.keep == 0 or t == self.n_steps:
            self.clouds.append(cloud)

    def build(self):
        return FilterHistory(
            clouds=self.clouds,
            log_increments=self.increments,
            ancestry=self.ancestry,
            **self.meta,
        )


def _step_weights(lw_prev, log_obs, t, context=""):
    joint = lw_prev + log_obs
    norm = logsumexp(joint)
    if not np.isfinite(norm):
        raise DegenerateWeightsError(t, context)
    return joint - norm, norm


def bootstrap_filter(model, theta, y, n_particles, *, rng=None,
                     scheme="systematic", ess_threshold=None, store="full",
                     store_ancestry=False, x0=None):
    """Bootstrap SIR filter conditional on a known parameter vector.

    Propagates through the transition law, weights by the observation
    density, and resamples (every step by default, or when the ESS falls
    below ``ess_threshold * N``).
    """
    theta = np.asarray(theta, dtype=float)
    model.check_support(theta)
    rng = np.random.default_rng(rng)
    y = np.asarray(y)
    n_steps = len(y)
    x0v = model.x0 if x0 is None else float(x0)
    hist = _HistoryBuilder(model, n_particles, "bootstrap", n_steps, store,
                           theta=theta, ancestry=store_ancestry, x0=x0v)
    x = np.full(n_particles, x0v)
    lw = np.full(n_particles, -math.log(n_particles))
    for t in range(1, n_steps + 1):
        x = model.transition_sample(x, theta, t, rng)
        log_obs = model.observation_logpdf(y[t - 1], x, theta, t)
        lw, increment = _step_weights(lw, log_obs, t, f"theta={theta}")
        if ess_threshold is None or ess(lw) < ess_threshold * n_particles:
            idx = resample(lw, scheme, rng, t=t)
            x = x[idx]
            lw = np.full(n_particles, -math.log(n_particles))
        else:
            idx = np.arange(n_particles)
        hist.add(t, increment, ParticleCloud(t, x.copy(), lw.copy()), idx)
    return hist.build()


def storvik_filter(model, y, n_particles, *, rng=None, scheme="systematic",
                   ess_threshold=None, store="full", store_ancestry=False,
                   x0=None):
    """SIR filter with conjugate parameter learning.

    Per step: draw theta from p(theta | s_{t-1}) per particle, propagate,
    weight by the observation density under the same draw, update the
    sufficient statistics, then resample states, statistics and draws
    jointly.  The stored clouds approximate p(x_t, theta | y^t).
    """
    rng = np.random.default_rng(rng)
    y = np.asarray(y)
    n_steps = len(y)
    x0v = model.x0 if x0 is None else float(x0)
    hist = _HistoryBuilder(model, n_particles, "storvik", n_steps, store,
                           ancestry=store_ancestry, x0=x0v)
    x = np.full(n_particles, x0v)
    s = np.tile(model.prior_suffstats(), (n_particles, 1))
    lw = np.full(n_particles, -math.log(n_particles))
    for t in range(1, n_steps + 1):
        theta = model.sample_params(s, rng)
        x_new = model.transition_sample(x, theta, t, rng)
        log_obs = model.observation_logpdf(y[t - 1], x_new, theta, t)
        lw, increment = _step_weights(lw, log_obs, t)
        s_new = model.update_suffstats(s, x, x_new, y[t - 1], t)
        if ess_threshold is None or ess(lw) < ess_threshold * n_particles:
            idx = resample(lw, scheme, rng, t=t)
            x, s, theta = x_new[idx], s_new[idx], theta[idx]
            lw = np.full(n_particles, -math.log(n_particles))
        else:
            idx = np.arange(n_particles)
            x, s = x_new, s_new
        hist.add(t, increment,
                 ParticleCloud(t, x.copy(), lw.copy(), params=theta.copy(),
                               suffstats=s.copy()),
                 idx)
    return hist.build()


def liu_west_filter(model, y, n_particles, *, a=0.974, rng=None,
                    scheme="systematic", store="full", store_ancestry=False,
                    x0=None):
    """Auxiliary-style filter with a shrinkage kernel refresh of parameters.

    Parameters live on a transformed scale (log for positive blocks).  Kernel
    locations are a*eta + (1-a)*eta_bar with covariance (1-a^2)*V_t, which
    preserves the parameter-marginal variance in expectation; a=1 reduces to
    plain state augmentation with no jitter.
    """
    if not 0.0 < a <= 1.0:
        raise ValueError("kernel shrinkage parameter a must be in (0, 1]")
    rng = np.random.default_rng(rng)
    y = np.asarray(y)
    n_steps = len(y)
    n = n_particles
    h2 = 1.0 - a * a
    x0v = model.x0 if x0 is None else float(x0)
    hist = _HistoryBuilder(model, n, "liu_west", n_steps, store,
                           ancestry=store_ancestry, x0=x0v)
    x = np.full(n, x0v)
    prior = np.tile(model.prior_suffstats(), (n, 1))
    eta = model.transform_params(model.sample_params(prior, rng))
    lw = np.full(n, -math.log(n))
    for t in range(1, n_steps + 1):
        w = np.exp(lw - np.max(lw))
        w /= w.sum()
        eta_bar = w @ eta
        centered = eta - eta_bar
        cov = (centered * w[:, None]).T @ centered
        locs = a * eta + (1.0 - a) * eta_bar
        theta_loc = model.untransform_params(locs)
        look = model.transition_mean(x, theta_loc, t)
        log_look = model.observation_logpdf(y[t - 1], look, theta_loc, t)
        g = lw + log_look
        stage1 = logsumexp(g)
        if not np.isfinite(stage1):
            raise DegenerateWeightsError(t, "first-stage lookahead")
        idx = resample(g - stage1, scheme, rng, t=t)
        lam, vecs = np.linalg.eigh(h2 * cov)
        scale = vecs * np.sqrt(np.clip(lam, 0.0, None))
        eta = locs[idx] + rng.standard_normal(eta.shape) @ scale.T
        theta = model.untransform_params(eta)
        x = model.transition_sample(x[idx], theta, t, rng)
        log_num = model.observation_logpdf(y[t - 1], x, theta, t)
        lw2 = log_num - log_look[idx]
        norm2 = logsumexp(lw2)
        if not np.isfinite(norm2):
            raise DegenerateWeightsError(t, "second-stage reweighting")
        increment = stage1 + norm2 - math.log(n)
        lw = lw2 - norm2
        hist.add(t, increment,
                 ParticleCloud(t, x.copy(), lw.copy(), params=theta.copy()),
                 idx)
    return hist.build()


@dataclass
class GaussianMoments:
    """Per-step Kalman quantities: prior (a, R) and posterior (m, C).

    Arrays have shape (T,) for a single pass or (T, K) for a batch of K
    parameter draws filtered in lockstep.
    """

    prior_mean: np.ndarray
    prior_var: np.ndarray
    post_mean: np.ndarray
    post_var: np.ndarray

    @property
    def n_steps(self):
        return self.prior_mean.shape[0]


def _kalman_scalar(f, g, v, w, to, oo, mt, ct, y):
    # plain-float loop: an order of magnitude faster than numpy scalar ops,
    # which matters inside MCMC iterations
    n_steps = len(y)
    a = np.empty(n_steps)
    r = np.empty(n_steps)
    m = np.empty(n_steps)
    c = np.empty(n_steps)
    ll = 0.0
    for t in range(n_steps):
        at = g * mt + to
        rt = g * ct * g + w
        qt = f * rt * f + v
        if qt <= 0.0:
            raise NumericalDegeneracyError(
                f"singular innovation variance at step {t + 1}"
            )
        e = y[t] - (f * at + oo)
        gain = rt * f / qt
        mt = at + gain * e
        ct = rt - gain * f * rt
        ll -= 0.5 * (LOG_2PI + math.log(qt) + e * e / qt)
        a[t] = at
        r[t] = rt
        m[t] = mt
        c[t] = ct
    return GaussianMoments(a, r, m, c), ll


def kalman_filter(f, g, v, w, m0, c0, y, *, trans_offset=0.0, obs_offset=0.0):
    """Exact filter for x_t = g x_{t-1} + trans_offset + N(0, w),
    y_t = f x_t + obs_offset + N(0, v).

    Coefficients may be scalars or arrays of shape (K,), in which case K
    independent passes run in lockstep over the same data.  Returns the
    stored moments and the exact log-likelihood from the prediction-error
    decomposition.
    """
    y = np.asarray(y, dtype=float)
    f, g, v, w, to, oo, mt, ct = np.broadcast_arrays(
        *[np.asarray(q, dtype=float) for q in
          (f, g, v, w, trans_offset, obs_offset, m0, c0)]
    )
    scalar = f.ndim == 0
    if scalar:
        return _kalman_scalar(float(f), float(g), float(v), float(w),
                              float(to), float(oo), float(mt), float(ct),
                              [float(q) for q in y])
    shape = f.shape
    n_steps = len(y)
    a = np.empty((n_steps,) + shape)
    r = np.empty_like(a)
    m = np.empty_like(a)
    c = np.empty_like(a)
    mt = np.array(mt, dtype=float)
    ct = np.array(ct, dtype=float)
    ll = np.zeros(shape)
    for t in range(n_steps):
        at = g * mt + to
        rt = g * ct * g + w
        qt = f * rt * f + v
        if np.any(qt <= 0.0):
            raise NumericalDegeneracyError(
                f"singular innovation variance at step {t + 1}"
            )
        e = y[t] - (f * at + oo)
        gain = rt * f / qt
        mt = at + gain * e
        ct = rt - gain * f * rt
        ll = ll - 0.5 * (LOG_2PI + np.log(qt) + e * e / qt)
        a[t], r[t], m[t], c[t] = at, rt, mt, ct
    return GaussianMoments(a, r, m, c), ll
