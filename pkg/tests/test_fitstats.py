import numpy as np
import pytest

from facdet.fitstats import compute_fit
from facdet.mlfit import EstimationResult, fit_ml, independent_cluster_spec
from facdet.model import (PopulationDescriptor, build_population_pattern,
                          implied_covariance)


def attenuated_correlation(params):
    sigma = implied_covariance(params)
    r = 2 / np.pi * np.arcsin(np.clip(sigma, -1, 1))
    np.fill_diagonal(r, 1.0)
    return r


def fit_cell(sl, cl, phi, dichotomize, n):
    params = build_population_pattern(PopulationDescriptor(3, 5, sl, cl, phi))
    S = attenuated_correlation(params) if dichotomize else implied_covariance(params)
    spec = independent_cluster_spec(3, 5, phi_free=phi != 0)
    res = fit_ml(S, spec, n)
    assert res.converged
    return compute_fit(res, S, n), res


class TestComputeFit:
    def test_perfect_fit(self):
        fit, _ = fit_cell(0.8, 0, 0.3, dichotomize=False, n=10**6)
        assert fit.chi_square < 1e-4
        assert fit.rmsea == 0.0
        assert fit.cfi == 1.0
        assert fit.srmr < 1e-8
        assert fit.p_value == pytest.approx(1.0)

    def test_misfit_cell_published_values(self):
        # exact dichotomized-population correlations of the strongest
        # misfit cell: RMSEA ~ .072, CFI ~ .918 at n = 1e6
        fit, _ = fit_cell(0.8, 1, 0.3, dichotomize=True, n=10**6)
        assert fit.rmsea == pytest.approx(0.072, abs=0.005)
        assert fit.cfi == pytest.approx(0.918, abs=0.010)
        assert fit.df == 87
        assert fit.p_value < 0.01
        assert fit.chi_square == pytest.approx(447_000, rel=0.01)

    def test_rmsea_insensitive_to_n_at_fixed_discrepancy(self):
        fit1, res = fit_cell(0.8, 1, 0.3, dichotomize=True, n=10**6)
        fit2 = compute_fit(res, attenuated_correlation(
            build_population_pattern(PopulationDescriptor(3, 5, 0.8, 1, 0.3))),
            2 * 10**6)
        assert abs(fit1.rmsea - fit2.rmsea) < 1e-3

    def test_srmr_zero_iff_residuals_vanish(self):
        # exact reproduction -> exactly zero
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.4, 0, 0.0))
        sigma = implied_covariance(params)
        exact = EstimationResult(params=params, method="ML", converged=True,
                                 f_min=0.0, iterations=0, n=1000, df=87)
        assert compute_fit(exact, sigma, 1000).srmr == 0.0
        # estimated optimum -> numerically zero
        fit, _ = fit_cell(0.4, 0, 0.0, dichotomize=False, n=1000)
        assert fit.srmr < 1e-8
        fit_mis, _ = fit_cell(0.8, 1, 0.3, dichotomize=False, n=1000)
        assert fit_mis.srmr > 1e-3

    def test_ranges(self):
        for dich in (False, True):
            fit, _ = fit_cell(0.8, 1, 0.3, dichotomize=dich, n=500)
            assert fit.rmsea >= 0
            assert 0 <= fit.cfi <= 1
            assert fit.srmr >= 0
            assert 0 <= fit.p_value <= 1

    def test_identification_error(self):
        params = build_population_pattern(PopulationDescriptor(2, 3, 0.6, 0, 0.0))
        bad = EstimationResult(params=params, method="ML", converged=True,
                               f_min=0.0, iterations=1, n=100, df=0)
        with pytest.raises(ValueError):
            compute_fit(bad, implied_covariance(params), 100)

    def test_baseline_dominates_for_misfit(self):
        fit, _ = fit_cell(0.8, 1, 0.3, dichotomize=True, n=10**5)
        assert fit.baseline_chi_square > fit.chi_square
        assert fit.baseline_df == 105
