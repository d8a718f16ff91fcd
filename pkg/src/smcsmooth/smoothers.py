"""Backward passes: forward-backward particle smoothing for fixed parameters,
joint state-parameter smoothing by backward resampling (plain and with
adjusted weights), refiltering, and exact FFBS draws for linear-Gaussian
coefficients.

All backward resampling weights are computed in log space; categorical draws
use the Gumbel-max trick so a whole block of trajectories advances one time
step per vectorized operation.  Draw blocks consume RNG substreams spawned in
a fixed order, so results do not depend on block scheduling.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DataError,
    DegenerateWeightsError,
    InsufficientSampleError,
    NumericalDegeneracyError,
)
from .filters import (
    FilterHistory,
    GaussianMoments,
    bootstrap_filter,
    kalman_filter,
    liu_west_filter,
    storvik_filter,
)
from .models import normal_logpdf, transform_columns

# target element count for (draws x particles) work matrices; 14 MB keeps
# temporaries inside the allocator's cached arena (large blocks thrash mmap)
_BLOCK_ELEMS = 1_750_000


@dataclass
class SmoothingDraws:
    """Joint draws from the smoothing distribution.

    ``trajectories[m, i]`` is x_{i+1} of draw m; ``params[m]`` the parameter
    vector the draw was generated under (None for known-theta smoothing).
    """

    trajectories: np.ndarray
    params: np.ndarray | None
    method: str
    provenance: dict = field(default_factory=dict)

    @property
    def n_draws(self):
        return self.trajectories.shape[0]

    @property
    def n_steps(self):
        return self.trajectories.shape[1]


@dataclass
class JointGaussianApprox:
    """Per-step Gaussian fit to (x_t, transformed theta).

    ``means[i]`` and ``covs[i]`` hold the joint moments at t = i+1; ``gain``
    and ``cond_var`` are the precomputed pieces of the conditional
    distribution of the state given the parameters, which shares one
    conditional variance per time step.
    """

    means: np.ndarray      # (T, 1+P)
    covs: np.ndarray       # (T, 1+P, 1+P)
    gain: np.ndarray       # (T, P)
    cond_var: np.ndarray   # (T,)
    param_blocks: tuple = ()

    @property
    def n_steps(self):
        return self.means.shape[0]

    @property
    def state_mean(self):
        return self.means[:, 0]

    @property
    def state_var(self):
        return self.covs[:, 0, 0]

    @property
    def param_mean(self):
        return self.means[:, 1:]

    def conditional_state_mean(self, i, eta):
        """E[x_{i+1} | theta] under the fit, for transformed draws eta."""
        return self.state_mean[i] + (eta - self.param_mean[i]) @ self.gain[i]


def _block_sizes(total, per_block):
    per_block = max(1, per_block)
    sizes = []
    left = total
    while left > 0:
        sizes.append(min(per_block, left))
        left -= sizes[-1]
    return sizes


def _categorical_rows(log_weights, rng, t=None, context=""):
    """One categorical draw per row of a log-weight matrix.

    Weights may carry an arbitrary additive constant per row.  Raises when a
    whole row has underflowed.  The input matrix is consumed as scratch
    space; callers pass temporaries.
    """
    n_rows, n = log_weights.shape
    m = log_weights.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        dead = int(np.argmin(np.isfinite(m[:, 0])))
        raise DegenerateWeightsError(t, f"{context}, draw index {dead}")
    w = log_weights
    np.subtract(w, m, out=w)
    np.exp(w, out=w)
    np.cumsum(w, axis=1, out=w)
    w /= w[:, -1].copy()[:, None]
    w[:, -1] = 1.0
    offsets = np.arange(n_rows)[:, None]
    w += offsets
    flat = np.searchsorted(w.ravel(),
                           (rng.random((n_rows, 1)) + offsets).ravel(),
                           side="right")
    return np.minimum(flat - offsets[:, 0] * n, n - 1)


def _categorical_from_log_row(log_weights, size, rng):
    """``size`` iid categorical draws from one log-weight vector."""
    m = np.max(log_weights)
    w = np.exp(log_weights - m)
    cum = np.cumsum(w)
    cum /= cum[-1]
    cum[-1] = 1.0
    idx = np.searchsorted(cum, rng.random(size), side="right")
    return np.minimum(idx, len(cum) - 1)


def _transition_quad(model, x_next, states, theta_b, t_next):
    """Backward transition weights up to an additive per-draw constant.

    All four models have Gaussian transitions, so the draw-dependent part of
    log p(x_{t+1} | x_t, theta) is -(x_{t+1} - mean)^2 / (2 var); the log
    normalizer varies only with theta, i.e. per row, and cancels in the
    per-row categorical draw.  Returns a fresh matrix the caller may consume.
    """
    mean = model.transition_mean(states, theta_b, t_next)
    target = (x_next.shape[0], states.shape[-1])
    if isinstance(mean, np.ndarray) and mean.shape == target:
        diff = np.subtract(x_next[:, None], mean, out=mean)
    else:
        diff = x_next[:, None] - mean
    np.multiply(diff, diff, out=diff)
    diff *= -0.5 / model.transition_var(theta_b)
    return diff


def _is_uniform(log_weights):
    return log_weights[0] == log_weights[-1] and np.ptp(log_weights) == 0.0


def pls_backward_log_weights(model, cloud, x_next, theta, t_next):
    """Log backward-resampling weights p(x_{t+1} | x_t^{(j)}, theta) plus the
    stored filter log weights; rows index draws, columns filter particles."""
    theta = np.asarray(theta, dtype=float)
    x_next = np.atleast_1d(np.asarray(x_next, dtype=float))
    return cloud.log_weights[None, :] + model.transition_logpdf(
        x_next[:, None], cloud.states[None, :], theta[:, None, :], t_next
    )


def plsa_backward_log_weights(model, cloud, x_next, theta, t_next, approx,
                              eta=None):
    """PLS weights times the fitted conditional-to-marginal density ratio of
    the time-t state under the joint Gaussian approximation (log scale)."""
    i = cloud.t - 1
    theta = np.asarray(theta, dtype=float)
    if eta is None:
        eta = transform_columns(theta, approx.param_blocks)
    base = pls_backward_log_weights(model, cloud, x_next, theta, t_next)
    cond_mean = approx.conditional_state_mean(i, np.atleast_2d(eta))
    states = cloud.states[None, :]
    ratio = normal_logpdf(states, cond_mean[:, None], approx.cond_var[i]) \
        - normal_logpdf(states, approx.state_mean[i], approx.state_var[i])
    return base + ratio


def _history_backward(model, history, n_draws, rng, weight_fn, method,
                      provenance):
    history._require_full()
    clouds = history.clouds
    n_steps = len(clouds)
    final = clouds[-1]
    if final.params is None:
        raise DataError(f"{method} needs a history with parameter draws")
    out = np.empty((n_draws, n_steps))
    thetas = np.empty((n_draws, final.params.shape[1]))
    start = 0
    for size in _block_sizes(n_draws, _BLOCK_ELEMS // final.n):
        sl = slice(start, start + size)
        pick = _categorical_from_log_row(final.log_weights, size, rng)
        x = final.states[pick]
        theta = final.params[pick]
        theta_b = theta[:, None, :]
        out[sl, -1] = x
        for t in range(n_steps - 1, 0, -1):
            cloud = clouds[t - 1]
            logw = weight_fn(cloud, x, theta_b, t + 1)
            if not _is_uniform(cloud.log_weights):
                logw += cloud.log_weights[None, :]
            idx = _categorical_rows(logw, rng, t=t,
                                    context="backward transition weights")
            x = cloud.states[idx]
            out[sl, t - 1] = x
        thetas[sl] = theta
        start += size
    return SmoothingDraws(out, thetas, method, provenance)


def pls_smooth(model, history, n_draws=None, rng=None):
    """Backward resampling of joint (state, theta) filter output.

    Selects (x_T, theta) from the final cloud, then resamples each earlier
    cloud with weights proportional to the transition density under the
    selected theta.  The state-parameter dependence at early t is ignored by
    construction; this estimator carries the resulting bias, which the
    harness measures.
    """
    rng = np.random.default_rng(rng)
    if n_draws is None:
        n_draws = history.n_particles

    def weight_fn(cloud, x, theta_b, t_next):
        return _transition_quad(model, x, cloud.states[None, :], theta_b,
                                t_next)

    prov = {"n_filter": history.n_particles, "n_draws": n_draws}
    return _history_backward(model, history, n_draws, rng, weight_fn, "pls",
                             prov)


def plsa_smooth(model, history, approx, n_draws=None, rng=None):
    """PLS with adjusted backward weights.

    Multiplies each transition weight by the ratio of the fitted conditional
    density of x_t given the selected theta to its fitted marginal, both from
    the per-step joint Gaussian approximation.  With zero fitted
    cross-covariance the ratio is one and the pass reduces exactly to
    ``pls_smooth``.
    """
    rng = np.random.default_rng(rng)
    if n_draws is None:
        n_draws = history.n_particles
    if approx.n_steps != len(history.clouds):
        raise DataError("approximation and history cover different spans")

    def weight_fn(cloud, x, theta_b, t_next):
        i = cloud.t - 1
        logw = _transition_quad(model, x, cloud.states[None, :], theta_b,
                                t_next)
        eta = transform_columns(theta_b[:, 0, :], approx.param_blocks)
        cond_mean = approx.conditional_state_mean(i, eta)
        diff = cloud.states[None, :] - cond_mean[:, None]
        np.multiply(diff, diff, out=diff)
        diff *= -0.5 / approx.cond_var[i]
        logw += diff
        marg = cloud.states - approx.state_mean[i]
        logw += (marg * marg) * (0.5 / approx.state_var[i])
        return logw

    prov = {"n_filter": history.n_particles, "n_draws": n_draws}
    return _history_backward(model, history, n_draws, rng, weight_fn, "plsa",
                             prov)


def fit_joint_gaussian(history, *, jitter=1e-9):
    """Per-step Gaussian fit of (x_t, transformed theta) to a learning
    filter's clouds, with a relative diagonal jitter before inversion."""
    history._require_full()
    if history.clouds[0].params is None:
        raise DataError("joint Gaussian fit needs parameter draws")
    blocks = history.param_blocks
    n_steps = len(history.clouds)
    n_params = history.clouds[0].params.shape[1]
    dim = 1 + n_params
    if history.n_particles < dim + 2:
        raise InsufficientSampleError(
            f"need at least {dim + 2} particles to fit a {dim}-d Gaussian"
        )
    means = np.empty((n_steps, dim))
    covs = np.empty((n_steps, dim, dim))
    gain = np.empty((n_steps, n_params))
    cond_var = np.empty(n_steps)
    for i, cloud in enumerate(history.clouds):
        v = np.column_stack(
            [cloud.states, transform_columns(cloud.params, blocks)]
        )
        w = cloud.weights()
        mu = w @ v
        dv = v - mu
        cov = (dv * w[:, None]).T @ dv
        cov[np.diag_indices(dim)] += jitter * np.trace(cov) / dim
        g = np.linalg.solve(cov[1:, 1:], cov[1:, 0])
        cv = cov[0, 0] - cov[0, 1:] @ g
        if cv <= 0.0:
            raise NumericalDegeneracyError(
                f"conditional state variance not positive at t={i + 1}"
            )
        means[i], covs[i], gain[i], cond_var[i] = mu, cov, g, cv
    return JointGaussianApprox(means, covs, gain, cond_var, blocks)


def godsill_backward(model, theta, history, rng=None, size=None):
    """Joint smoothing draw(s) from a known-theta filter history.

    Selects x_T from the final cloud, then walks backwards resampling each
    cloud with weights proportional to the stored filter weights times
    p(x_{t+1} | x_t, theta).  Returns one path of length T, or (size, T).
    """
    rng = np.random.default_rng(rng)
    theta = np.asarray(theta, dtype=float)
    model.check_support(theta)
    history._require_full()
    clouds = history.clouds
    n_steps = len(clouds)
    n_draws = 1 if size is None else int(size)
    out = np.empty((n_draws, n_steps))
    theta_b = theta[None, None, :]
    start = 0
    for block in _block_sizes(n_draws, _BLOCK_ELEMS // clouds[-1].n):
        sl = slice(start, start + block)
        final = clouds[-1]
        pick = _categorical_from_log_row(final.log_weights, block, rng)
        x = final.states[pick]
        out[sl, -1] = x
        for t in range(n_steps - 1, 0, -1):
            cloud = clouds[t - 1]
            logw = _transition_quad(model, x, cloud.states[None, :], theta_b,
                                    t + 1)
            if not _is_uniform(cloud.log_weights):
                logw += cloud.log_weights[None, :]
            idx = _categorical_rows(logw, rng, t=t,
                                    context="backward transition weights")
            x = cloud.states[idx]
            out[sl, t - 1] = x
        start += block
    return out[0] if size is None else out


def ffbs_draw(moments, g, rng=None, size=None):
    """Exact joint draw(s) of x_{1:T} from stored Kalman moments.

    Backward recursion: B_t = C_t g / R_{t+1}, h_t = m_t + B_t (x_{t+1} -
    a_{t+1}), H_t = C_t - B_t^2 R_{t+1}.  For (T,) moments returns one path
    or (size, T); for batched (T, K) moments returns one path per column as
    (K, T) and ``g`` may be a (K,) array.
    """
    rng = np.random.default_rng(rng)
    a, r = moments.prior_mean, moments.prior_var
    m, c = moments.post_mean, moments.post_var
    batched = m.ndim == 2
    if batched and size is not None:
        raise ValueError("size applies only to single-pass moments")
    n_steps = m.shape[0]
    if not batched and size is None:
        return _ffbs_scalar(a, r, m, c, float(g), rng)
    k = m.shape[1] if batched else (1 if size is None else int(size))
    if not batched:
        a, r, m, c = (q[:, None] for q in (a, r, m, c))
    g = np.asarray(g, dtype=float)
    out = np.empty((n_steps, k))
    x = m[-1] + np.sqrt(c[-1]) * rng.standard_normal(k)
    out[-1] = x
    for t in range(n_steps - 2, -1, -1):
        r_next = r[t + 1]
        if np.any(r_next <= 0.0):
            raise NumericalDegeneracyError(
                f"singular prior variance in backward pass at step {t + 2}"
            )
        b = c[t] * g / r_next
        h = m[t] + b * (x - a[t + 1])
        hv = np.maximum(c[t] - b * b * r_next, 0.0)
        x = h + np.sqrt(hv) * rng.standard_normal(k)
        out[t] = x
    paths = out.T
    return paths[0] if (not batched and size is None) else paths


def _ffbs_scalar(a, r, m, c, g, rng):
    # plain-float backward pass; one noise vector drawn up front
    n_steps = len(m)
    z = rng.standard_normal(n_steps)
    out = np.empty(n_steps)
    x = float(m[-1]) + math.sqrt(float(c[-1])) * z[-1]
    out[-1] = x
    for t in range(n_steps - 2, -1, -1):
        r_next = float(r[t + 1])
        if r_next <= 0.0:
            raise NumericalDegeneracyError(
                f"singular prior variance in backward pass at step {t + 2}"
            )
        ct = float(c[t])
        b = ct * g / r_next
        h = float(m[t]) + b * (x - float(a[t + 1]))
        hv = ct - b * b * r_next
        x = h + math.sqrt(hv if hv > 0.0 else 0.0) * z[t]
        out[t] = x
    return out


def _refilter_block(model, y, x0, thetas, n_states, scheme, rng):
    """Conditional bootstrap filters plus backward passes for a block of
    parameter draws, fully vectorized across the block."""
    rng = np.random.default_rng(rng)
    y = np.asarray(y)
    n_steps = len(y)
    n_blk, _ = thetas.shape
    theta_b = thetas[:, None, :]
    x = np.full((n_blk, n_states), x0)
    states = np.empty((n_steps, n_blk, n_states))
    for t in range(1, n_steps + 1):
        x = model.transition_sample(x, theta_b, t, rng)
        lw = model.observation_logpdf(y[t - 1], x, theta_b, t)
        idx = _systematic_rows(lw, rng, t=t,
                               context="conditional filter weights")
        x = np.take_along_axis(x, idx, axis=1)
        states[t - 1] = x
    out = np.empty((n_blk, n_steps))
    rows = np.arange(n_blk)
    pick = rng.integers(0, n_states, size=n_blk)
    x_cur = states[-1][rows, pick]
    out[:, -1] = x_cur
    for t in range(n_steps - 1, 0, -1):
        logw = _transition_quad(model, x_cur, states[t - 1], theta_b, t + 1)
        idx = _categorical_rows(logw, rng, t=t,
                                context="backward transition weights")
        x_cur = states[t - 1][rows, idx]
        out[:, t - 1] = x_cur
    return out


def _systematic_rows(log_weights, rng, t=None, context=""):
    """Row-wise systematic resampling of a (B, N) log-weight matrix.

    Consumes the input matrix as scratch space.
    """
    n_blk, n = log_weights.shape
    m = log_weights.max(axis=1, keepdims=True)
    if not np.all(np.isfinite(m)):
        dead = int(np.argmin(np.isfinite(m[:, 0])))
        raise DegenerateWeightsError(t, f"{context}, draw index {dead}")
    w = log_weights
    np.subtract(w, m, out=w)
    np.exp(w, out=w)
    np.cumsum(w, axis=1, out=w)
    w /= w[:, -1].copy()[:, None]
    w[:, -1] = 1.0
    offsets = np.arange(n_blk)[:, None]
    w += offsets
    pos = (rng.random((n_blk, 1)) + np.arange(n)) / n
    flat_idx = np.searchsorted(w.ravel(), (pos + offsets).ravel(),
                               side="right")
    idx = flat_idx.reshape(n_blk, n) - offsets * n
    return np.minimum(idx, n - 1)


def _run_forward(model, y, n_filter, forward, lw_a, rng, scheme, x0, store):
    if forward == "storvik":
        return storvik_filter(model, y, n_filter, rng=rng, scheme=scheme,
                              store=store, x0=x0)
    if forward == "liu_west":
        return liu_west_filter(model, y, n_filter, a=lw_a, rng=rng,
                               scheme=scheme, store=store, x0=x0)
    raise ValueError("forward must be 'storvik' or 'liu_west'")


def _draw_final_params(history, n_theta, rng):
    final = history.final
    idx = rng.choice(final.n, size=n_theta, p=final.weights())
    return final.params[idx]


def refilter_smooth(model, y, n_filter, *, n_theta=None, n_states=None,
                    forward="storvik", lw_a=0.974, rng=None,
                    scheme="systematic", x0=None, workers=1):
    """Two-stage smoothing: learn parameters forward, then refilter.

    Stage 1 runs a learning filter with ``n_filter`` particles and draws
    ``n_theta`` parameter vectors from its final cloud.  Stage 2 runs, for
    each draw, a fresh bootstrap filter with ``n_states`` particles
    conditional on that draw followed by one backward trajectory draw.
    ``n_theta`` or ``n_states`` well below ``n_filter`` give the linear-cost
    variants.
    """
    rng = np.random.default_rng(rng)
    y = np.asarray(y)
    n_theta = n_filter if n_theta is None else int(n_theta)
    n_states = n_filter if n_states is None else int(n_states)
    if n_theta > n_filter or n_states > n_filter:
        raise ValueError("n_theta and n_states must not exceed n_filter")
    x0v = model.x0 if x0 is None else float(x0)
    history = _run_forward(model, y, n_filter, forward, lw_a, rng, scheme,
                           x0v, store="final")
    thetas = _draw_final_params(history, n_theta, rng)
    # per-step temporaries are (B, n_states); the stored per-block state
    # history is (T, B, n_states) and gets its own cap
    per_block = min(_BLOCK_ELEMS // n_states,
                    30_000_000 // (len(y) * n_states))
    sizes = _block_sizes(n_theta, per_block)
    streams = rng.spawn(len(sizes))
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    jobs = [
        (model, y, x0v, thetas[bounds[i]:bounds[i + 1]], n_states, scheme,
         streams[i])
        for i in range(len(sizes))
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(_refilter_block_star, jobs))
    else:
        blocks = [_refilter_block(*job) for job in jobs]
    trajectories = np.vstack(blocks)
    prov = {"n_filter": n_filter, "n_theta": n_theta, "n_states": n_states,
            "forward": forward}
    return SmoothingDraws(trajectories, thetas, "refilter", prov)


def _refilter_block_star(job):
    return _refilter_block(*job)


def refilter_ffbs(model, y, n_filter, *, n_theta=None, forward="storvik",
                  lw_a=0.974, rng=None, scheme="systematic", x0=None):
    """Refiltering with exact FFBS draws for linear-Gaussian coefficients.

    One Kalman pass and one backward sampling draw per parameter vector from
    the learning filter's final cloud; all passes run in lockstep.
    """
    rng = np.random.default_rng(rng)
    y = np.asarray(y)
    n_theta = n_filter if n_theta is None else int(n_theta)
    if n_theta > n_filter:
        raise ValueError("n_theta must not exceed n_filter")
    x0v = model.x0 if x0 is None else float(x0)
    history = _run_forward(model, y, n_filter, forward, lw_a, rng, scheme,
                           x0v, store="final")
    thetas = _draw_final_params(history, n_theta, rng)
    lg = model.lg_coeffs(thetas)
    if lg is None:
        raise ValueError(
            f"model '{model.name}' exposes no linear-Gaussian coefficients"
        )
    moments, _ = kalman_filter(lg.f, lg.g, lg.v, lg.w, x0v, 0.0, y,
                               trans_offset=lg.trans_offset,
                               obs_offset=lg.obs_offset)
    trajectories = ffbs_draw(moments, lg.g, rng)
    prov = {"n_filter": n_filter, "n_theta": n_theta, "forward": forward}
    return SmoothingDraws(trajectories, thetas, "refilter_ffbs", prov)
