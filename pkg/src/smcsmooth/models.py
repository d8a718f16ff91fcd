"""State-space model catalog with conjugate parameter learning.

Four scalar-state benchmark models, each with a recursive sufficient-statistic
update for its conjugate prior and a one-pass batch posterior that serves as an
independent cross-check of the recursion:

* ``ar1``      x_t = phi x_{t-1} + N(0, W),  y_t = x_t + N(0, V)
* ``growth``   x_t = a x + b x/(1+x^2) + g cos(1.2(t-1)) + N(0, W),
               y_t = x_t^2/20 + N(0, V)
* ``chaotic``  x_t = mu + x_{t-1} - e^{x_{t-1}} + N(0, sigma2),
               y_t ~ Poisson(phi e^{x_t})   (log-scale Ricker map)
* ``sv``       x_t = alpha + beta x_{t-1} + N(0, W),
               y_t = mu + e^{x_t/2} N(0, 1)

Conventions used throughout:

- Time is 1-based: x_t for t = 1..T evolves from a known, fixed x0; ``y[i]``
  holds y_{i+1}.
- Inverse-gamma blocks are IG(shape, scale): W ~ IG(n, d) has mean d/(n-1).
- Normal-inverse-gamma regression blocks NIG(b, B, n, d) put the coefficient
  variance at W * B^{-1}; B is a precision-scale quantity (the inverse of the
  scale factor) and every recursion below updates it additively.
- Hooks are vectorized: parameter arrays carry the parameter vector on the
  last axis and broadcast against state arrays, so the same code serves one
  particle or a matrix of backward-pass candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import DataError, NumericalDegeneracyError, SupportError

LOG_2PI = math.log(2.0 * math.pi)

# exp() overflow guard for runaway particles; only ever binds in branches that
# are already numerically dead (weights underflow long before the cap matters)
_EXP_CAP = 700.0


def normal_logpdf(x, mean, var):
    return -0.5 * (LOG_2PI + np.log(var) + (x - mean) ** 2 / var)


def _capped_exp(x):
    return np.exp(np.minimum(x, _EXP_CAP))


@dataclass(frozen=True)
class ParamBlock:
    name: str
    support: str = "real"  # "real" or "positive"


@dataclass(frozen=True)
class LinearGaussian:
    """Coefficients of a linear-Gaussian state-space form.

    x_t = g x_{t-1} + trans_offset + N(0, w)
    y_t = f x_t + obs_offset + N(0, v)

    Fields are scalars or arrays (one entry per parameter draw).
    """

    f: float | np.ndarray
    g: float | np.ndarray
    v: float | np.ndarray
    w: float | np.ndarray
    trans_offset: float | np.ndarray = 0.0
    obs_offset: float | np.ndarray = 0.0


def transform_columns(params, blocks):
    """Map parameters to an unconstrained scale: log on positive blocks."""
    eta = np.array(params, dtype=float, copy=True)
    for k, block in enumerate(blocks):
        if block.support == "positive":
            eta[..., k] = np.log(eta[..., k])
    return eta


def untransform_columns(eta, blocks):
    params = np.array(eta, dtype=float, copy=True)
    for k, block in enumerate(blocks):
        if block.support == "positive":
            params[..., k] = np.exp(params[..., k])
    return params


class StateSpaceModel:
    """Interface shared by the four benchmark models.

    Subclasses define the transition and observation laws, the recursive
    sufficient-statistic update, the matching one-pass batch posterior, and
    the conjugate parameter sampler.  All methods are pure given an explicit
    ``numpy.random.Generator``.
    """

    name = "base"
    state_dim = 1
    param_blocks: tuple[ParamBlock, ...] = ()
    suffstat_names: tuple[str, ...] = ()
    default_true_params: tuple[float, ...] = ()
    integer_obs = False

    def __init__(self, x0=0.0, fixed_params=None):
        self.x0 = float(x0)
        if fixed_params is not None:
            fixed_params = np.asarray(fixed_params, dtype=float)
            if fixed_params.shape != (self.n_params,):
                raise DataError(
                    f"fixed_params must have shape ({self.n_params},), "
                    f"got {fixed_params.shape}"
                )
            self.check_support(fixed_params)
        self.fixed_params = fixed_params

    # -- layout ---------------------------------------------------------

    @property
    def n_params(self):
        return len(self.param_blocks)

    @property
    def param_names(self):
        return tuple(b.name for b in self.param_blocks)

    @property
    def n_suffstats(self):
        return len(self.suffstat_names)

    def prior_suffstats(self):
        return self._prior.copy()

    def check_support(self, params):
        """Validate a parameter array, naming the first violated block.

        Boundary values (zero variances) are allowed so that degenerate
        simulation regimes can be expressed; density hooks require strictly
        positive scale parameters.
        """
        p = np.asarray(params, dtype=float)
        if p.shape[-1] != self.n_params:
            raise DataError(
                f"{self.name} expects {self.n_params} parameters, "
                f"got last axis {p.shape[-1]}"
            )
        for k, block in enumerate(self.param_blocks):
            vals = p[..., k]
            if not np.all(np.isfinite(vals)):
                raise SupportError(block.name, "non-finite value")
            if block.support == "positive" and not np.all(vals >= 0):
                raise SupportError(block.name, "must be nonnegative")

    def transform_params(self, params):
        return transform_columns(params, self.param_blocks)

    def untransform_params(self, eta):
        return untransform_columns(eta, self.param_blocks)

    # -- laws -----------------------------------------------------------

    def transition_mean(self, x_prev, params, t):
        raise NotImplementedError

    def transition_var(self, params):
        raise NotImplementedError

    def transition_sample(self, x_prev, params, t, rng):
        mean = self.transition_mean(x_prev, params, t)
        sd = np.sqrt(self.transition_var(params))
        return mean + sd * rng.standard_normal(np.shape(mean))

    def transition_logpdf(self, x, x_prev, params, t):
        return normal_logpdf(
            x, self.transition_mean(x_prev, params, t), self.transition_var(params)
        )

    def observation_logpdf(self, y, x, params, t):
        raise NotImplementedError

    def observation_sample(self, x, params, t, rng):
        raise NotImplementedError

    # -- conjugate learning ----------------------------------------------

    def update_suffstats(self, s, x_prev, x, y, t):
        raise NotImplementedError

    def batch_posterior(self, xs, ys):
        raise NotImplementedError

    def sample_params(self, suffstats, rng):
        """Draw from p(theta | s); honors a point-mass parameter model."""
        s = np.asarray(suffstats, dtype=float)
        single = s.ndim == 1
        s2 = np.atleast_2d(s)
        if self.fixed_params is not None:
            out = np.broadcast_to(self.fixed_params, (s2.shape[0], self.n_params))
            out = np.array(out)
        else:
            out = self._sample_params(s2, rng)
        return out[0] if single else out

    def _sample_params(self, s, rng):
        raise NotImplementedError

    # -- optional hooks ---------------------------------------------------

    def lg_coeffs(self, params):
        """Full linear-Gaussian coefficients, or None when unavailable."""
        return None

    def transition_lg(self, params):
        """(g, offset, w) of a linear-Gaussian transition, or None."""
        return None

    def init_states_from_obs(self, y):
        raise NotImplementedError

    def _check_batch_args(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.ndim != 1 or ys.ndim != 1 or xs.shape[0] != ys.shape[0] + 1:
            raise DataError(
                "batch_posterior needs a state path of length T+1 (x0 first) "
                f"and T observations; got {xs.shape} states, {ys.shape} obs"
            )
        return xs, ys

    def __repr__(self):
        return f"{type(self).__name__}(x0={self.x0})"


def _require_positive(name, *arrays):
    for arr in arrays:
        if not np.all(arr > 0):
            raise NumericalDegeneracyError(
                f"sufficient-statistic update produced a non-positive '{name}' "
                "scale; this indicates an implementation bug"
            )


class Ar1Model(StateSpaceModel):
    """AR(1) plus noise with unknown (phi, W, V).

    Conjugate prior: (phi, W) ~ NIG(b0, B0, n0, d0), V ~ IG(nu0, delta0).
    """

    name = "ar1"
    param_blocks = (
        ParamBlock("phi"),
        ParamBlock("w", "positive"),
        ParamBlock("v", "positive"),
    )
    suffstat_names = ("b", "B", "n", "d", "nu", "delta")
    default_true_params = (0.75, 1.0, 1.0)

    def __init__(self, x0=0.0, fixed_params=None, *, b0=0.5, B0=1.0,
                 n0=2.0, d0=2.0, nu0=2.0, delta0=2.0):
        super().__init__(x0, fixed_params)
        self._prior = np.array([b0, B0, n0, d0, nu0, delta0], dtype=float)

    def transition_mean(self, x_prev, params, t):
        return np.asarray(params)[..., 0] * x_prev

    def transition_var(self, params):
        return np.asarray(params)[..., 1]

    def observation_logpdf(self, y, x, params, t):
        return normal_logpdf(y, x, np.asarray(params)[..., 2])

    def observation_sample(self, x, params, t, rng):
        v = np.asarray(params)[..., 2]
        return x + np.sqrt(v) * rng.standard_normal(np.shape(x))

    def update_suffstats(self, s, x_prev, x, y, t):
        s = np.asarray(s, dtype=float)
        b, B, n, d, nu, delta = (s[..., k] for k in range(6))
        B1 = B + x_prev * x_prev
        b1 = (B * b + x_prev * x) / B1
        d1 = d + (b * b * B + x * x - b1 * b1 * B1) / 2.0
        delta1 = delta + (y - x) ** 2 / 2.0
        _require_positive("d", d1)
        _require_positive("delta", delta1)
        return np.stack([b1, B1, n + 0.5, d1, nu + 0.5, delta1], axis=-1)

    def batch_posterior(self, xs, ys):
        xs, ys = self._check_batch_args(xs, ys)
        b0, B0, n0, d0, nu0, delta0 = self._prior
        xp, xc = xs[:-1], xs[1:]
        B = B0 + xp @ xp
        b = (B0 * b0 + xp @ xc) / B
        half = len(ys) / 2.0
        d = d0 + (b0 * b0 * B0 + xc @ xc - b * b * B) / 2.0
        delta = delta0 + np.sum((ys - xc) ** 2) / 2.0
        return np.array([b, B, n0 + half, d, nu0 + half, delta])

    def _sample_params(self, s, rng):
        b, B, n, d, nu, delta = (s[:, k] for k in range(6))
        w = d / rng.gamma(n)
        phi = b + np.sqrt(w / B) * rng.standard_normal(s.shape[0])
        v = delta / rng.gamma(nu)
        return np.column_stack([phi, w, v])

    def lg_coeffs(self, params):
        p = np.asarray(params)
        return LinearGaussian(f=1.0, g=p[..., 0], v=p[..., 2], w=p[..., 1])

    def transition_lg(self, params):
        p = np.asarray(params)
        return p[..., 0], 0.0, p[..., 1]

    def init_states_from_obs(self, y):
        return np.asarray(y, dtype=float).copy()


class GrowthModel(StateSpaceModel):
    """Nonstationary growth model with unknown (alpha, beta, gamma, W, V).

    The transition drift is linear in (alpha, beta, gamma) through the
    regressor F_t = (x_{t-1}, x_{t-1}/(1+x_{t-1}^2), cos(1.2(t-1)))', giving a
    three-dimensional NIG block plus an IG block for V.
    """

    name = "growth"
    param_blocks = (
        ParamBlock("alpha"),
        ParamBlock("beta"),
        ParamBlock("gamma"),
        ParamBlock("w", "positive"),
        ParamBlock("v", "positive"),
    )
    suffstat_names = (
        "b1", "b2", "b3",
        "B11", "B12", "B13", "B21", "B22", "B23", "B31", "B32", "B33",
        "n", "d", "nu", "delta",
    )
    default_true_params = (0.5, 25.0, 8.0, 1.0, 5.0)

    def __init__(self, x0=0.0, fixed_params=None, *, b0=(0.5, 25.0, 8.0),
                 B0=(16.0, 0.01, 0.0625), n0=2.0, d0=2.0, nu0=2.0, delta0=2.0):
        super().__init__(x0, fixed_params)
        B0 = np.asarray(B0, dtype=float)
        if B0.ndim == 1:
            B0 = np.diag(B0)
        self._prior = np.concatenate(
            [np.asarray(b0, dtype=float), B0.ravel(),
             np.array([n0, d0, nu0, delta0], dtype=float)]
        )

    @staticmethod
    def regressors(x_prev, t):
        x_prev = np.asarray(x_prev, dtype=float)
        cos_t = np.cos(1.2 * (np.asarray(t, dtype=float) - 1.0))
        return np.stack(
            np.broadcast_arrays(x_prev, x_prev / (1.0 + x_prev * x_prev), cos_t),
            axis=-1,
        )

    def transition_mean(self, x_prev, params, t):
        p = np.asarray(params)
        a, b, g = p[..., 0], p[..., 1], p[..., 2]
        ct = np.cos(1.2 * (np.asarray(t, dtype=float) - 1.0))
        return a * x_prev + b * x_prev / (1.0 + x_prev * x_prev) + g * ct

    def transition_var(self, params):
        return np.asarray(params)[..., 3]

    def observation_logpdf(self, y, x, params, t):
        return normal_logpdf(y, x * x / 20.0, np.asarray(params)[..., 4])

    def observation_sample(self, x, params, t, rng):
        v = np.asarray(params)[..., 4]
        return x * x / 20.0 + np.sqrt(v) * rng.standard_normal(np.shape(x))

    def update_suffstats(self, s, x_prev, x, y, t):
        s = np.asarray(s, dtype=float)
        lead = s.shape[:-1]
        b = s[..., 0:3]
        B = s[..., 3:12].reshape(lead + (3, 3))
        n, d, nu, delta = (s[..., k] for k in (12, 13, 14, 15))
        F = self.regressors(x_prev, t)
        x_band = np.broadcast_to(np.asarray(x, dtype=float), F.shape[:-1])
        B1 = B + F[..., :, None] * F[..., None, :]
        rhs = np.einsum("...ij,...j->...i", B, b) + F * x_band[..., None]
        b1 = np.linalg.solve(B1, rhs[..., None])[..., 0]
        qf0 = np.einsum("...i,...ij,...j->...", b, B, b)
        qf1 = np.einsum("...i,...ij,...j->...", b1, B1, b1)
        d1 = d + (qf0 + x * x - qf1) / 2.0
        delta1 = delta + (y - x * x / 20.0) ** 2 / 2.0
        _require_positive("d", d1)
        _require_positive("delta", delta1)
        tail = np.stack([n + 0.5, d1, nu + 0.5, delta1], axis=-1)
        return np.concatenate([b1, B1.reshape(lead + (9,)), tail], axis=-1)

    def batch_posterior(self, xs, ys):
        xs, ys = self._check_batch_args(xs, ys)
        b0 = self._prior[0:3]
        B0 = self._prior[3:12].reshape(3, 3)
        n0, d0, nu0, delta0 = self._prior[12:16]
        T = len(ys)
        F = self.regressors(xs[:-1], np.arange(1, T + 1))
        xc = xs[1:]
        B = B0 + F.T @ F
        b = np.linalg.solve(B, B0 @ b0 + F.T @ xc)
        half = T / 2.0
        d = d0 + (b0 @ B0 @ b0 + xc @ xc - b @ B @ b) / 2.0
        delta = delta0 + np.sum((ys - xc * xc / 20.0) ** 2) / 2.0
        return np.concatenate([b, B.ravel(), [n0 + half, d, nu0 + half, delta]])

    def _sample_params(self, s, rng):
        b = s[:, 0:3]
        B = s[:, 3:12].reshape(-1, 3, 3)
        n, d, nu, delta = (s[:, k] for k in (12, 13, 14, 15))
        w = d / rng.gamma(n)
        v = delta / rng.gamma(nu)
        L = np.linalg.cholesky(np.linalg.inv(B))
        z = rng.standard_normal(b.shape)
        coeff = b + np.sqrt(w)[:, None] * np.einsum("nij,nj->ni", L, z)
        return np.column_stack([coeff, w, v])

    def init_states_from_obs(self, y):
        return np.sqrt(20.0 * np.clip(np.asarray(y, dtype=float), 0.05, None))


class ChaoticModel(StateSpaceModel):
    """Log-scale Ricker map with Poisson counts; unknown (mu, sigma2, phi).

    Conjugate prior: phi ~ Gamma(a0, rate b0), (mu, sigma2) ~ NIG(m0, c0, n0, d0)
    through the unit-regressor representation x_t - x_{t-1} + e^{x_{t-1}} =
    mu + z_t.
    """

    name = "chaotic"
    param_blocks = (
        ParamBlock("mu"),
        ParamBlock("sigma2", "positive"),
        ParamBlock("phi", "positive"),
    )
    suffstat_names = ("a", "b", "m", "c", "n", "d")
    default_true_params = (3.8, 0.3, 10.0)
    integer_obs = True

    def __init__(self, x0=0.0, fixed_params=None, *, a0=15.0, b0=1.0,
                 m0=5.0, c0=0.1, n0=2.0, d0=2.0):
        super().__init__(x0, fixed_params)
        self._prior = np.array([a0, b0, m0, c0, n0, d0], dtype=float)

    def transition_mean(self, x_prev, params, t):
        return np.asarray(params)[..., 0] + x_prev - _capped_exp(x_prev)

    def transition_var(self, params):
        return np.asarray(params)[..., 1]

    @staticmethod
    def _check_counts(y):
        y = np.asarray(y)
        if not np.all((y >= 0) & (np.floor(y) == y)):
            raise DataError("chaotic observations must be nonnegative integers")
        return np.asarray(y, dtype=float)

    def observation_logpdf(self, y, x, params, t):
        y = self._check_counts(y)
        lam = np.asarray(params)[..., 2] * _capped_exp(x)
        return xlogy(y, lam) - lam - gammaln(y + 1.0)

    def observation_sample(self, x, params, t, rng):
        lam = np.asarray(params)[..., 2] * _capped_exp(x)
        return rng.poisson(lam)

    def update_suffstats(self, s, x_prev, x, y, t):
        s = np.asarray(s, dtype=float)
        a, b, m, c, n, d = (s[..., k] for k in range(6))
        u = x - x_prev + _capped_exp(x_prev)
        a1 = a + y
        b1 = b + _capped_exp(x)
        c1 = c + 1.0
        m1 = (c * m + u) / c1
        d1 = d + (c * m * m + u * u - c1 * m1 * m1) / 2.0
        _require_positive("d", d1)
        _require_positive("b", b1)
        return np.stack([a1, b1, m1, c1, n + 0.5, d1], axis=-1)

    def batch_posterior(self, xs, ys):
        xs, ys = self._check_batch_args(xs, ys)
        a0, b0, m0, c0, n0, d0 = self._prior
        u = xs[1:] - xs[:-1] + _capped_exp(xs[:-1])
        T = len(ys)
        a = a0 + np.sum(ys)
        b = b0 + np.sum(_capped_exp(xs[1:]))
        c = c0 + T
        m = (c0 * m0 + np.sum(u)) / c
        d = d0 + (c0 * m0 * m0 + u @ u - c * m * m) / 2.0
        return np.array([a, b, m, c, n0 + T / 2.0, d])

    def _sample_params(self, s, rng):
        a, b, m, c, n, d = (s[:, k] for k in range(6))
        phi = rng.gamma(a) / b
        sigma2 = d / rng.gamma(n)
        mu = m + np.sqrt(sigma2 / c) * rng.standard_normal(s.shape[0])
        return np.column_stack([mu, sigma2, phi])

    def init_states_from_obs(self, y):
        y = self._check_counts(y)
        phi0 = self._prior[0] / self._prior[1]
        return np.log((y + 0.5) / phi0)


class SvModel(StateSpaceModel):
    """Stochastic volatility with AR(1) log-variance; unknown (mu, alpha, beta, W).

    Conjugate prior: mu ~ N(a0, b0) with b0 a variance, ((alpha, beta)', W) ~
    NIG(m0, C0, n0, d0).  The mean block updates against heteroscedastic
    known-variance observations: 1/b_t = 1/b_{t-1} + e^{-x_t}.
    """

    name = "sv"
    param_blocks = (
        ParamBlock("mu"),
        ParamBlock("alpha"),
        ParamBlock("beta"),
        ParamBlock("w", "positive"),
    )
    suffstat_names = (
        "m1", "m2", "C11", "C12", "C21", "C22", "n", "d", "a_mu", "b_mu",
    )
    default_true_params = (0.0, 0.0, 0.95, 0.09)

    def __init__(self, x0=0.0, fixed_params=None, *, a0=0.0, b0=1.0,
                 m0=(0.0, 0.9), C0=(1.0, 1.0), n0=2.0, d0=2.0):
        super().__init__(x0, fixed_params)
        C0 = np.asarray(C0, dtype=float)
        if C0.ndim == 1:
            C0 = np.diag(C0)
        self._prior = np.concatenate(
            [np.asarray(m0, dtype=float), C0.ravel(),
             np.array([n0, d0, a0, b0], dtype=float)]
        )

    def transition_mean(self, x_prev, params, t):
        p = np.asarray(params)
        return p[..., 1] + p[..., 2] * x_prev

    def transition_var(self, params):
        return np.asarray(params)[..., 3]

    def observation_logpdf(self, y, x, params, t):
        mu = np.asarray(params)[..., 0]
        resid = y - mu
        return -0.5 * (LOG_2PI + x + resid * resid * _capped_exp(-x))

    def observation_sample(self, x, params, t, rng):
        mu = np.asarray(params)[..., 0]
        return mu + np.exp(x / 2.0) * rng.standard_normal(np.shape(x))

    def update_suffstats(self, s, x_prev, x, y, t):
        s = np.asarray(s, dtype=float)
        lead = s.shape[:-1]
        m = s[..., 0:2]
        C = s[..., 2:6].reshape(lead + (2, 2))
        n, d, a_mu, b_mu = (s[..., k] for k in (6, 7, 8, 9))
        ones = np.ones_like(np.asarray(x_prev, dtype=float))
        F = np.stack(np.broadcast_arrays(ones, x_prev), axis=-1)
        x_band = np.broadcast_to(np.asarray(x, dtype=float), F.shape[:-1])
        C1 = C + F[..., :, None] * F[..., None, :]
        rhs = np.einsum("...ij,...j->...i", C, m) + F * x_band[..., None]
        m1 = np.linalg.solve(C1, rhs[..., None])[..., 0]
        qf0 = np.einsum("...i,...ij,...j->...", m, C, m)
        qf1 = np.einsum("...i,...ij,...j->...", m1, C1, m1)
        d1 = d + (qf0 + x * x - qf1) / 2.0
        prec_obs = _capped_exp(-x)
        b1 = 1.0 / (1.0 / b_mu + prec_obs)
        a1 = b1 * (a_mu / b_mu + prec_obs * y)
        _require_positive("d", d1)
        _require_positive("b_mu", b1)
        tail = np.stack([n + 0.5, d1, a1, b1], axis=-1)
        return np.concatenate([m1, C1.reshape(lead + (4,)), tail], axis=-1)

    def batch_posterior(self, xs, ys):
        xs, ys = self._check_batch_args(xs, ys)
        m0 = self._prior[0:2]
        C0 = self._prior[2:6].reshape(2, 2)
        n0, d0, a0, b0 = self._prior[6:10]
        T = len(ys)
        xc = xs[1:]
        F = np.column_stack([np.ones(T), xs[:-1]])
        C = C0 + F.T @ F
        m = np.linalg.solve(C, C0 @ m0 + F.T @ xc)
        d = d0 + (m0 @ C0 @ m0 + xc @ xc - m @ C @ m) / 2.0
        prec_obs = _capped_exp(-xc)
        b = 1.0 / (1.0 / b0 + np.sum(prec_obs))
        a = b * (a0 / b0 + prec_obs @ ys)
        return np.concatenate([m, C.ravel(), [n0 + T / 2.0, d, a, b]])

    def _sample_params(self, s, rng):
        m = s[:, 0:2]
        C = s[:, 2:6].reshape(-1, 2, 2)
        n, d, a_mu, b_mu = (s[:, k] for k in (6, 7, 8, 9))
        w = d / rng.gamma(n)
        L = np.linalg.cholesky(np.linalg.inv(C))
        z = rng.standard_normal(m.shape)
        ab = m + np.sqrt(w)[:, None] * np.einsum("nij,nj->ni", L, z)
        mu = a_mu + np.sqrt(b_mu) * rng.standard_normal(s.shape[0])
        return np.column_stack([mu, ab, w])

    def transition_lg(self, params):
        p = np.asarray(params)
        return p[..., 2], p[..., 1], p[..., 3]

    def init_states_from_obs(self, y):
        y = np.asarray(y, dtype=float)
        centered = y - y.mean()
        floor = 1e-3 * max(float(np.var(y)), 1e-8)
        return np.log(np.clip(centered * centered, floor, None))


# alias: a model instance is the full specification (laws, prior, hooks)
ModelSpec = StateSpaceModel

MODEL_CLASSES = {
    "ar1": Ar1Model,
    "growth": GrowthModel,
    "chaotic": ChaoticModel,
    "sv": SvModel,
}


def get_model(name, **kwargs):
    """Build a model by name; hyperparameters override the defaults."""
    try:
        cls = MODEL_CLASSES[name]
    except KeyError:
        raise DataError(
            f"unknown model '{name}' (choose from {sorted(MODEL_CLASSES)})"
        ) from None
    return cls(**kwargs)


def simulate(model, theta, n_steps, *, x0=None, rng=None):
    """Simulate (states, observations) for t = 1..n_steps from a fixed x0."""
    theta = np.asarray(theta, dtype=float)
    model.check_support(theta)
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = np.random.default_rng(rng)
    x = model.x0 if x0 is None else float(x0)
    states = np.empty(n_steps)
    obs = []
    for t in range(1, n_steps + 1):
        x = float(model.transition_sample(x, theta, t, rng))
        states[t - 1] = x
        obs.append(model.observation_sample(x, theta, t, rng))
    return states, np.asarray(obs)
