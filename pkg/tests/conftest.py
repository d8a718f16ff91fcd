"""Shared oracles and fixtures.

The RTS recursions here are an independent closed-form route to the smoothed
marginal moments; sampling-based smoothers are checked against them rather
than against their own machinery.
"""

import numpy as np
import pytest

from smcsmooth.filters import kalman_filter


def rts_moments(f, g, v, w, m0, c0, y, trans_offset=0.0, obs_offset=0.0):
    """Closed-form smoothed means/variances via Rauch-Tung-Striebel."""
    moments, _ = kalman_filter(f, g, v, w, m0, c0, y,
                               trans_offset=trans_offset,
                               obs_offset=obs_offset)
    a, r = moments.prior_mean, moments.prior_var
    m, c = moments.post_mean, moments.post_var
    n = len(y)
    sm = np.empty(n)
    sv = np.empty(n)
    sm[-1], sv[-1] = m[-1], c[-1]
    for t in range(n - 2, -1, -1):
        gain = c[t] * g / r[t + 1]
        sm[t] = m[t] + gain * (sm[t + 1] - a[t + 1])
        sv[t] = c[t] + gain * gain * (sv[t + 1] - r[t + 1])
    return sm, sv


@pytest.fixture(scope="session")
def ar1_dataset():
    """One fixed AR(1) dataset at the benchmark truth (phi, W, V) = (.75, 1, 1)."""
    from smcsmooth.models import get_model, simulate

    model = get_model("ar1")
    theta = np.array([0.75, 1.0, 1.0])
    states, obs = simulate(model, theta, 100, rng=20240601)
    return model, theta, states, obs
