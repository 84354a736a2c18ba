import numpy as np
import pytest

from facdet.dwls import dwls_value_and_gradient, fit_dwls
from facdet.mlfit import independent_cluster_spec
from facdet.model import (PopulationDescriptor, build_population_pattern,
                          implied_covariance)
from facdet.polychoric import PolychoricMatrix
from facdet.scoring import determinacy_bl


def exact_poly(params, asy_var=None):
    """PolychoricMatrix carrying the model-implied correlations exactly."""
    rho = implied_covariance(params)
    p = rho.shape[0]
    m = p * (p - 1) // 2
    av = np.ones(m) if asy_var is None else np.asarray(asy_var)
    thresholds = [np.array([0.0])] * p
    return PolychoricMatrix(rho=rho, thresholds=thresholds, asy_var=av)


class TestFitDwls:
    def test_perfect_fit_recovery(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.8, 0, 0.3))
        spec = independent_cluster_spec(3, 5, phi_free=True)
        res = fit_dwls(exact_poly(params), spec)
        assert res.converged
        assert np.abs(res.params.lam - params.lam).max() < 1e-6
        assert np.abs(res.params.phi - params.phi).max() < 1e-6

    def test_weight_invariance_on_exact_input(self, rng):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.4, 0, 0.3))
        spec = independent_cluster_spec(3, 5, phi_free=True)
        res_uls = fit_dwls(exact_poly(params), spec)
        weights = rng.uniform(0.2, 5.0, 105)
        res_dwls = fit_dwls(exact_poly(params, asy_var=1.0 / weights), spec)
        assert np.abs(res_uls.params.lam - res_dwls.params.lam).max() < 1e-6
        assert np.abs(res_uls.params.phi - res_dwls.params.phi).max() < 1e-6

    @pytest.mark.parametrize("sl", [0.4, 0.8])
    def test_population_loading_recovery(self, sl):
        # polychorics undo the attenuation, so fitted loadings sit at the
        # generating values
        params = build_population_pattern(PopulationDescriptor(3, 5, sl, 0, 0.0))
        spec = independent_cluster_spec(3, 5, phi_free=False)
        res = fit_dwls(exact_poly(params), spec)
        assert np.abs(res.params.lam[spec.pattern] - sl).max() < 1e-6

    def test_misfit_boundary_solution_is_admissible(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.8, 1, 0.3))
        spec = independent_cluster_spec(3, 5, phi_free=True)
        res = fit_dwls(exact_poly(params), spec)
        assert res.converged
        assert res.params.theta_diag().min() > 0.003   # capped, not Heywood
        p_bl = determinacy_bl(res.params)
        assert np.all(p_bl <= 1.0)
        assert p_bl[0] > 0.97                          # strong overestimation

    def test_phi_stays_correlation(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.8, 1, 0.3))
        spec = independent_cluster_spec(3, 5, phi_free=True)
        res = fit_dwls(exact_poly(params), spec)
        assert np.allclose(np.diag(res.params.phi), 1.0)
        assert np.linalg.eigvalsh(res.params.phi)[0] > 0

    def test_nonfinite_weights_fall_back_to_uls(self):
        params = build_population_pattern(PopulationDescriptor(2, 3, 0.6, 0, 0.0))
        poly = exact_poly(params)
        poly.asy_var[2] = np.inf
        spec = independent_cluster_spec(2, 3, phi_free=False)
        res = fit_dwls(poly, spec)
        assert "uls_fallback" in res.notes
        assert res.converged

    def test_dimension_mismatch(self):
        params = build_population_pattern(PopulationDescriptor(2, 3, 0.6, 0, 0.0))
        spec = independent_cluster_spec(3, 5, phi_free=False)
        with pytest.raises(ValueError):
            fit_dwls(exact_poly(params), spec)


class TestGradient:
    def test_matches_finite_differences(self, rng):
        params = build_population_pattern(PopulationDescriptor(3, 4, 0.7, 1, 0.2))
        spec = independent_cluster_spec(3, 4, phi_free=True)
        r_obs = implied_covariance(params)[np.tril_indices(12, -1)]
        weights = rng.uniform(0.5, 2.0, r_obs.size)
        for _ in range(3):
            theta = np.concatenate([rng.uniform(0.2, 0.95, spec.n_loadings),
                                    rng.normal(0, 0.3, spec.n_phi)])
            _, g = dwls_value_and_gradient(theta, r_obs, weights, spec, 1e3)
            h = 1e-6
            for k in rng.choice(theta.size, size=5, replace=False):
                e = np.zeros_like(theta)
                e[k] = h
                fp = dwls_value_and_gradient(theta + e, r_obs, weights, spec, 1e3)[0]
                fm = dwls_value_and_gradient(theta - e, r_obs, weights, spec, 1e3)[0]
                fd = (fp - fm) / (2 * h)
                assert abs(g[k] - fd) / max(abs(fd), 1e-6) < 1e-4

    def test_penalty_gradient_active_region(self, rng):
        # push communalities past the cap and check the penalty derivative
        spec = independent_cluster_spec(2, 3, phi_free=False)
        r_obs = np.zeros(15)
        theta = np.full(spec.n_loadings, 1.05)
        _, g = dwls_value_and_gradient(theta, r_obs, np.ones(15), spec, 1e3)
        h = 1e-6
        e = np.zeros_like(theta)
        e[0] = h
        fd = (dwls_value_and_gradient(theta + e, r_obs, np.ones(15), spec, 1e3)[0]
              - dwls_value_and_gradient(theta - e, r_obs, np.ones(15), spec, 1e3)[0]) / (2 * h)
        assert abs(g[0] - fd) / abs(fd) < 1e-5
