import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smcsmooth.errors import DataError, MetricError
from smcsmooth.filters import FilterHistory, ParticleCloud, storvik_filter
from smcsmooth.metrics import (
    ParamSummary,
    mae_star,
    maep_star,
    standardized_errors,
    state_param_correlation,
)
from smcsmooth.models import ParamBlock, get_model, simulate


class TestStandardizedErrors:
    def test_zero_when_estimates_match(self):
        ref = np.array([1.0, -2.0, 0.5])
        sds = np.array([0.5, 1.0, 2.0])
        errs = standardized_errors(ref, ref, sds)
        assert np.all(errs == 0.0)
        assert mae_star(ref, ref, sds) == 0.0

    def test_unit_when_off_by_one_sd(self):
        ref = np.zeros(4)
        sds = np.array([0.5, 1.0, 2.0, 4.0])
        errs = standardized_errors(ref + sds, ref, sds)
        np.testing.assert_allclose(errs, 1.0)

    def test_zero_reference_sd_names_time(self):
        with pytest.raises(MetricError, match="t=2"):
            standardized_errors(np.ones(3), np.zeros(3),
                                np.array([1.0, 0.0, 1.0]))

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            standardized_errors(np.ones(3), np.zeros(4), np.ones(4))

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_nonnegative_and_scale_invariant(self, values):
        est = np.asarray(values)
        ref = np.zeros_like(est)
        sds = np.full_like(est, 2.0)
        errs = standardized_errors(est, ref, sds)
        assert np.all(errs >= 0)
        np.testing.assert_allclose(
            standardized_errors(2 * est, 2 * ref, 2 * sds), errs, rtol=1e-12
        )


class TestMaepStar:
    def test_identical_summaries_give_zero(self):
        s = ParamSummary(("a", "b"), np.array([1.0, 2.0]),
                         np.array([0.5, 0.5]))
        assert maep_star(s, s) == 0.0

    def test_single_parameter_off_by_one_sd(self):
        est = ParamSummary(("a",), np.array([1.5]), np.array([9.0]))
        ref = ParamSummary(("a",), np.array([1.0]), np.array([0.5]))
        assert maep_star(est, ref) == 1.0

    def test_block_mismatch(self):
        est = ParamSummary(("a",), np.array([1.0]), np.array([1.0]))
        ref = ParamSummary(("b",), np.array([1.0]), np.array([1.0]))
        with pytest.raises(DataError):
            maep_star(est, ref)

    def test_from_draws_weighted(self):
        draws = np.array([[0.0], [1.0]])
        summary = ParamSummary.from_draws(("a",), draws,
                                          weights=np.array([3.0, 1.0]))
        assert np.isclose(summary.means[0], 0.25)


class TestStateParamCorrelation:
    def test_constant_params_flagged_zero(self, ar1_dataset):
        model, theta, _, obs = ar1_dataset
        fixed = get_model("ar1", fixed_params=theta)
        hist = storvik_filter(fixed, obs[:10], 200, rng=0)
        diag = state_param_correlation(hist)
        assert np.all(diag.corr == 0.0)
        assert np.all(diag.degenerate)

    def test_recovers_synthetic_correlation(self):
        rng = np.random.default_rng(1)
        n, rho = 40_000, 0.5
        cov = np.array([[1.0, rho], [rho, 1.0]])
        z = rng.multivariate_normal([0.0, 0.0], cov, size=n)
        cloud = ParticleCloud(1, z[:, 0], np.full(n, -np.log(n)),
                              params=z[:, 1:2])
        hist = FilterHistory("synthetic", [cloud], np.zeros(1), n, "storvik",
                             param_blocks=(ParamBlock("phi"),))
        diag = state_param_correlation(hist)
        se = (1 - rho**2) / np.sqrt(n)
        assert abs(diag.corr[0, 0] - rho) < 3 * se

    def test_ar1_dependence_decays_with_time(self, ar1_dataset):
        model, _, _, obs = ar1_dataset
        hist = storvik_filter(model, obs, 4000, rng=2)
        diag = state_param_correlation(hist)
        phi_corr = np.abs(diag.corr[:, 0])
        assert phi_corr[:5].mean() > phi_corr[-10:].mean()

    def test_requires_parameter_draws(self, ar1_dataset):
        from smcsmooth.filters import bootstrap_filter

        model, theta, _, obs = ar1_dataset
        hist = bootstrap_filter(model, theta, obs[:10], 50, rng=3)
        with pytest.raises(DataError):
            state_param_correlation(hist)
