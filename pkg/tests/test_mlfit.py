import json

import numpy as np
import pytest

from conftest import random_admissible_model
from facdet.mlfit import (EstimationResult, ModelSpec, canonicalize_signs,
                          fit_ml, independent_cluster_spec, ml_discrepancy,
                          ml_gradient, ml_value_and_gradient, result_to_json,
                          start_values, _newton_polish)
from facdet.model import (PopulationDescriptor, build_population_pattern,
                          implied_covariance)

ATTENUATED_LOADING_SL40 = np.sqrt(2 / np.pi * np.arcsin(0.16))   # 0.31981...


def attenuated_correlation(params):
    """Exact correlation matrix of median-split indicators of the model."""
    sigma = implied_covariance(params)
    r = 2 / np.pi * np.arcsin(np.clip(sigma, -1, 1))
    np.fill_diagonal(r, 1.0)
    return r


class TestModelSpec:
    def test_counts(self):
        spec = independent_cluster_spec(3, 5, phi_free=True)
        assert spec.p == 15 and spec.q == 3
        assert spec.n_loadings == 15 and spec.n_phi == 3
        assert spec.n_free() == 33
        assert spec.degrees_of_freedom() == 120 - 33

    def test_identification_heuristics(self):
        with pytest.raises(ValueError):
            ModelSpec(pattern=np.zeros((4, 2), dtype=bool))
        pattern = np.zeros((4, 2), dtype=bool)
        pattern[:3, 0] = True
        pattern[3, 1] = True    # single indicator on factor 2
        with pytest.raises(ValueError):
            ModelSpec(pattern=pattern)


class TestStartValues:
    def test_layout(self):
        spec = independent_cluster_spec(3, 5, phi_free=True)
        theta = start_values(spec)
        assert np.all(theta[:15] == 0.5)
        assert np.all(theta[15:18] == 0.0)
        assert np.allclose(np.exp(theta[18:]), 0.5)

    def test_restart_loading_level(self):
        spec = independent_cluster_spec(3, 5, phi_free=False)
        assert np.all(start_values(spec, loading=0.3)[:15] == 0.3)


class TestFitML:
    @pytest.mark.parametrize("sl,cl,phi", [(0.40, 0, 0.0), (0.80, 0, 0.30),
                                           (0.80, 1, 0.30)])
    def test_perfect_fit_recovery(self, sl, cl, phi):
        params = build_population_pattern(PopulationDescriptor(3, 5, sl, cl, phi))
        sigma = implied_covariance(params)
        # fitted pattern includes the data-generating cross-loadings so
        # the optimum reproduces the generator exactly
        spec = ModelSpec(pattern=params.lam != 0, phi_free=phi != 0)
        res = fit_ml(sigma, spec, 1000)
        assert res.converged
        assert res.f_min < 1e-10
        assert np.abs(res.params.lam - params.lam).max() < 1e-6
        assert np.abs(res.params.phi - params.phi).max() < 1e-6
        assert np.abs(res.params.theta_diag() - params.theta_diag()).max() < 1e-6

    def test_attenuated_loadings_closed_form(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.40, 0, 0.0))
        r = attenuated_correlation(params)
        spec = independent_cluster_spec(3, 5, phi_free=False)
        res = fit_ml(r, spec, 10**6)
        salient = res.params.lam[spec.pattern]
        assert np.abs(salient - ATTENUATED_LOADING_SL40).max() < 5e-4

    def test_misfit_has_positive_discrepancy(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.80, 1, 0.30))
        spec = independent_cluster_spec(3, 5, phi_free=True)
        res = fit_ml(implied_covariance(params), spec, 1000)
        assert res.converged
        assert res.f_min > 0.1

    def test_scale_consistency(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.80, 0, 0.30))
        sigma = implied_covariance(params)
        spec = independent_cluster_spec(3, 5, phi_free=True)
        res1 = fit_ml(sigma, spec, 1000)
        res2 = fit_ml(4.0 * sigma, spec, 1000)
        def standardized(res):
            d = np.sqrt(np.diag(implied_covariance(res.params)))
            return res.params.lam / d[:, None]
        assert np.abs(standardized(res1) - standardized(res2)).max() < 1e-8

    def test_descent_from_start(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.40, 1, 0.30))
        sigma = implied_covariance(params)
        spec = independent_cluster_spec(3, 5, phi_free=True)
        res = fit_ml(sigma, spec, 1000)
        f_start = ml_value_and_gradient(start_values(spec), sigma, spec)[0]
        assert res.f_min <= f_start

    def test_input_validation(self):
        spec = independent_cluster_spec(2, 3, phi_free=False)
        bad = np.eye(6)
        bad[0, 0] = -1.0
        with pytest.raises(ValueError):
            fit_ml(bad, spec, 100)
        with pytest.raises(ValueError):
            fit_ml(np.eye(6), spec, 5)
        asym = np.eye(6)
        asym[0, 1] = 0.5
        with pytest.raises(ValueError):
            fit_ml(asym, spec, 100)


class TestGradient:
    def test_zero_at_optimum(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.80, 0, 0.30))
        sigma = implied_covariance(params)
        spec = independent_cluster_spec(3, 5, phi_free=True)
        res = fit_ml(sigma, spec, 1000)
        theta = np.concatenate([
            res.params.lam[spec.pattern],
            np.arctanh(res.params.phi[np.tril_indices(3, -1)]),
            np.log(res.params.theta_diag()),
        ])
        assert np.abs(ml_gradient(theta, sigma, spec)).max() < 1e-6

    def test_matches_finite_differences(self, rng):
        params = random_admissible_model(rng, q=3, p_per_factor=4)
        sigma = implied_covariance(params)
        spec = independent_cluster_spec(3, 4, phi_free=True)
        for _ in range(5):
            theta = start_values(spec) + rng.normal(0, 0.15, spec.n_free())
            _, g = ml_value_and_gradient(theta, sigma, spec)
            h = 1e-5
            for k in rng.choice(theta.size, size=6, replace=False):
                e = np.zeros_like(theta)
                e[k] = h
                fd = (ml_value_and_gradient(theta + e, sigma, spec)[0]
                      - ml_value_and_gradient(theta - e, sigma, spec)[0]) / (2 * h)
                assert abs(g[k] - fd) / max(abs(fd), 1e-8) < 1e-5

    def test_zero_loading_symmetry(self):
        spec = independent_cluster_spec(2, 3, phi_free=False)
        theta = start_values(spec)
        theta[: spec.n_loadings] = 0.0
        theta[spec.n_loadings :] = 0.0     # uniquenesses at 1
        _, g = ml_value_and_gradient(theta, np.eye(6), spec)
        assert np.abs(g[: spec.n_loadings]).max() == 0.0


class TestNewtonPolish:
    def test_monotone_on_quadratic(self):
        H = np.diag([2.0, 10.0])
        fun = lambda t: (0.5 * t @ H @ t, H @ t)
        theta, f, g, _ = _newton_polish(np.array([3.0, -2.0]), fun)
        assert f <= fun(np.array([3.0, -2.0]))[0]
        assert np.abs(g).max() < 1e-7


class TestCanonicalization:
    def test_flips_negative_block(self):
        spec = independent_cluster_spec(2, 3, phi_free=True)
        lam = np.zeros((6, 2))
        lam[:3, 0] = -0.7
        lam[3:, 1] = 0.7
        phi = np.array([[1.0, -0.4], [-0.4, 1.0]])
        lam2, phi2 = canonicalize_signs(lam, phi, spec.pattern)
        assert np.all(lam2[:3, 0] == 0.7)
        assert phi2[0, 1] == pytest.approx(0.4)
        # implied covariance unchanged by the flip
        assert np.allclose(lam2 @ phi2 @ lam2.T, lam @ phi @ lam.T)


def test_result_json_roundtrip():
    params = build_population_pattern(PopulationDescriptor(2, 3, 0.6, 0, 0.2))
    spec = ModelSpec(pattern=params.lam != 0, phi_free=True)
    res = fit_ml(implied_covariance(params), spec, 500)
    doc = json.loads(result_to_json(res))
    assert doc["method"] == "ML"
    assert doc["n"] == 500 and doc["df"] == res.df
    assert np.allclose(np.array(doc["lambda"]), res.params.lam)
    assert np.allclose(np.array(doc["theta_diag"]), res.params.theta_diag())


def test_discrepancy_zero_iff_equal():
    params = build_population_pattern(PopulationDescriptor(2, 3, 0.6, 0, 0.2))
    sigma = implied_covariance(params)
    assert abs(ml_discrepancy(sigma, sigma)) < 1e-12
    assert ml_discrepancy(sigma, np.eye(6)) > 0
