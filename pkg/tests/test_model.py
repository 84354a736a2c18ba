import numpy as np
import pytest

from facdet.model import (FactorModelParams, InvalidModelError,
                          PopulationDescriptor, build_population_pattern,
                          implied_covariance, residual_decomposition)


def all_grid_descriptors():
    return [PopulationDescriptor(3, 5, sl, cl, phi)
            for sl in (0.40, 0.80) for cl in (0, 1) for phi in (0.00, 0.30)]


class TestBuildPopulationPattern:
    def test_published_example_rows(self):
        # q=3, p/q=5, sl=.80, cl=1: first indicator of each block carries
        # a .40 secondary loading on the next factor, cyclically
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.80, 1, 0.0))
        assert params.lam[0].tolist() == [0.80, 0.40, 0.00]
        assert params.lam[5].tolist() == [0.00, 0.80, 0.40]
        assert params.lam[10].tolist() == [0.40, 0.00, 0.80]
        assert params.lam[1].tolist() == [0.80, 0.00, 0.00]

    def test_residual_variances_no_cross(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.80, 0, 0.0))
        assert np.allclose(params.theta_diag(), 0.36)

    def test_residual_variance_cross_correlated(self):
        # communality of x1: .64 + .16 + 2*.8*.4*.3 = .992
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.80, 1, 0.30))
        assert params.theta[0, 0] == pytest.approx(0.008, abs=1e-12)

    def test_unit_observed_variance_whole_grid(self):
        for desc in all_grid_descriptors():
            sigma = implied_covariance(build_population_pattern(desc))
            assert np.abs(np.diag(sigma) - 1.0).max() < 1e-12

    def test_positive_definite_whole_grid(self):
        for desc in all_grid_descriptors():
            sigma = implied_covariance(build_population_pattern(desc))
            assert np.linalg.eigvalsh(sigma)[0] > 0

    def test_deterministic_and_idempotent(self):
        desc = PopulationDescriptor(3, 5, 0.40, 1, 0.30)
        a = build_population_pattern(desc)
        b = build_population_pattern(desc)
        assert np.array_equal(a.lam, b.lam)
        assert np.array_equal(a.phi, b.phi)
        assert np.array_equal(a.theta, b.theta)

    def test_excess_communality_rejected(self):
        with pytest.raises(InvalidModelError):
            build_population_pattern(PopulationDescriptor(2, 5, 0.9, 1, 0.7))

    def test_descriptor_validation(self):
        with pytest.raises(InvalidModelError):
            PopulationDescriptor(0, 5, 0.5)
        with pytest.raises(InvalidModelError):
            PopulationDescriptor(3, 1, 0.5)
        with pytest.raises(InvalidModelError):
            PopulationDescriptor(3, 5, 1.2)
        with pytest.raises(InvalidModelError):
            PopulationDescriptor(3, 5, 0.5, cl=2)
        with pytest.raises(InvalidModelError):
            PopulationDescriptor(3, 5, 0.5, phi_offdiag=1.0)


class TestImpliedCovariance:
    def test_zero_loadings_identity(self):
        params = FactorModelParams(np.zeros((4, 2)), np.eye(2), np.eye(4))
        assert np.array_equal(implied_covariance(params), np.eye(4))

    def test_within_and_cross_block(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.80, 0, 0.0))
        sigma = implied_covariance(params)
        assert sigma[1, 2] == pytest.approx(0.64)
        assert sigma[1, 6] == pytest.approx(0.0)

    def test_cross_loading_cell_hand_value(self):
        # (.8,.4,0) Phi (0,.8,.4)' with phi=.3 gives .656
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.80, 1, 0.30))
        sigma = implied_covariance(params)
        assert sigma[0, 5] == pytest.approx(0.656, abs=1e-12)


class TestResidualDecomposition:
    def test_perfect_fit(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.40, 0, 0.0))
        sigma = implied_covariance(params)
        model, resid = residual_decomposition(sigma, params)
        assert np.array_equal(model, sigma)
        assert np.abs(resid).max() == 0.0

    def test_recovers_perturbation_exactly(self, rng):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.40, 0, 0.0))
        sigma = implied_covariance(params)
        e = rng.normal(0, 0.01, sigma.shape)
        e = 0.5 * (e + e.T)
        _, resid = residual_decomposition(sigma + e, params)
        assert np.allclose(resid, e, atol=1e-14)

    def test_dimension_mismatch(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.40, 0, 0.0))
        with pytest.raises(InvalidModelError):
            residual_decomposition(np.eye(3), params)


class TestValidation:
    def test_rejects_nonsymmetric_phi(self):
        phi = np.array([[1.0, 0.3], [0.2, 1.0]])
        params = FactorModelParams(np.zeros((4, 2)), phi, np.eye(4))
        with pytest.raises(InvalidModelError):
            params.validate()

    def test_rejects_nonpd_theta(self):
        theta = np.diag([1.0, -0.1, 1.0, 1.0])
        params = FactorModelParams(np.zeros((4, 2)), np.eye(2), theta)
        with pytest.raises(InvalidModelError):
            params.validate()

    def test_rejects_offunit_phi_diagonal(self):
        phi = np.array([[1.1, 0.0], [0.0, 1.0]])
        params = FactorModelParams(np.zeros((4, 2)), phi, np.eye(4))
        with pytest.raises(InvalidModelError):
            params.validate()
