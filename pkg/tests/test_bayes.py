import csv

import numpy as np
import pytest

from facdet.bayes import (McmcSettings, PriorSpec, fit_bayes,
                          posterior_predictive_p, potential_scale_reduction,
                          summary_to_result, write_trace_csv)
from facdet.datagen import derive_stream, sample_continuous
from facdet.mlfit import fit_ml, independent_cluster_spec
from facdet.model import (FactorModelParams, PopulationDescriptor,
                          build_population_pattern, implied_covariance)
from facdet.scoring import determinacy_bl

FAST = McmcSettings(chains=2, burn_in=700, draws=1200)


class TestSettingsValidation:
    def test_needs_two_chains(self):
        with pytest.raises(ValueError):
            McmcSettings(chains=1)

    def test_needs_enough_draws(self):
        with pytest.raises(ValueError):
            McmcSettings(chains=2, draws=100)

    def test_prior_validation(self):
        with pytest.raises(ValueError):
            PriorSpec(cross_variance=0.0)
        with pytest.raises(ValueError):
            PriorSpec(theta_shape=-1.0)


class TestFitBayes:
    def test_agrees_with_ml_on_well_identified_data(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.8, 0, 0.3))
        s = sample_continuous(params, 900, derive_stream(91, 0))
        spec = independent_cluster_spec(3, 5, phi_free=True)
        S = np.corrcoef(s.x, rowvar=False)
        res_ml = fit_ml(S, spec, 900)
        summary = fit_bayes(s.x, spec, rng=derive_stream(91, 1), mcmc=FAST)
        assert summary.converged and summary.psr_max < 1.1
        diff = np.abs(summary.mean_params.lam[spec.pattern]
                      - res_ml.params.lam[spec.pattern])
        assert diff.max() < 0.03

    def test_shrinkage_on_null_data(self):
        # small-variance priors on every loading pull all estimates to
        # the prior mean when the data carry no factor structure
        params = FactorModelParams(np.zeros((15, 3)), np.eye(3), np.eye(15))
        s = sample_continuous(params, 900, derive_stream(91, 2))
        spec = independent_cluster_spec(3, 5, phi_free=False)
        priors = PriorSpec(salient_variance=0.01, cross_variance=0.01)
        summary = fit_bayes(s.x, spec, priors=priors,
                            rng=derive_stream(91, 3), mcmc=FAST)
        # individual posterior means carry O(1/sqrt(n)) data noise; the
        # shrinkage claim is about the ensemble
        assert np.abs(summary.mean_params.lam).mean() < 0.05
        assert np.abs(summary.mean_params.lam).max() < 0.10

    def test_phi_unit_diagonal(self):
        params = build_population_pattern(PopulationDescriptor(2, 4, 0.7, 0, 0.3))
        s = sample_continuous(params, 400, derive_stream(91, 4))
        spec = independent_cluster_spec(2, 4, phi_free=True)
        summary = fit_bayes(s.x, spec, rng=derive_stream(91, 5), mcmc=FAST)
        assert np.abs(np.diag(summary.mean_params.phi) - 1.0).max() < 1e-12
        assert np.abs(np.diag(summary.raw_mean_params.phi) - 1.0).max() < 1e-12

    def test_deterministic_given_stream(self):
        params = build_population_pattern(PopulationDescriptor(2, 4, 0.7, 0, 0.0))
        s = sample_continuous(params, 300, derive_stream(91, 6))
        spec = independent_cluster_spec(2, 4, phi_free=False)
        a = fit_bayes(s.x, spec, rng=derive_stream(91, 7), mcmc=FAST)
        b = fit_bayes(s.x, spec, rng=derive_stream(91, 7), mcmc=FAST)
        assert np.array_equal(a.mean_params.lam, b.mean_params.lam)
        assert a.ppp == b.ppp and a.psr_max == b.psr_max

    def test_retained_draw_count(self):
        params = build_population_pattern(PopulationDescriptor(2, 4, 0.7, 0, 0.0))
        s = sample_continuous(params, 300, derive_stream(91, 8))
        spec = independent_cluster_spec(2, 4, phi_free=False)
        summary = fit_bayes(s.x, spec, rng=derive_stream(91, 9), mcmc=FAST)
        assert summary.retained_draws == 2400
        assert summary.chains == 2

    def test_input_validation(self):
        spec = independent_cluster_spec(2, 4, phi_free=False)
        with pytest.raises(ValueError):
            fit_bayes(np.zeros((5, 8)), spec, mcmc=FAST)
        with pytest.raises(ValueError):
            fit_bayes(np.zeros((100, 6)), spec, mcmc=FAST)


class TestPsr:
    def test_agreeing_chains_near_one(self, rng):
        draws = rng.standard_normal((2, 2000))
        assert potential_scale_reduction(draws) < 1.05

    def test_separated_chains_flagged(self, rng):
        draws = rng.standard_normal((2, 2000))
        draws[1] += 3.0
        assert potential_scale_reduction(draws) > 1.1


class TestPpp:
    def test_calibrated_under_truth(self):
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.8, 0, 0.0))
        s = sample_continuous(params, 400, derive_stream(91, 12))
        spec = independent_cluster_spec(3, 5, phi_free=False)
        summary = fit_bayes(s.x, spec, rng=derive_stream(91, 112), mcmc=FAST)
        assert 0.2 < summary.ppp < 0.8

    def test_detects_gross_misfit(self):
        # a one-factor model forced onto three-factor data
        params = build_population_pattern(PopulationDescriptor(3, 5, 0.8, 0, 0.0))
        s = sample_continuous(params, 900, derive_stream(91, 12))
        spec = independent_cluster_spec(1, 15, phi_free=False)
        summary = fit_bayes(s.x, spec, rng=derive_stream(91, 13), mcmc=FAST)
        assert summary.ppp < 0.01

    def test_needs_draws(self):
        with pytest.raises(ValueError):
            posterior_predictive_p([], np.zeros((10, 2)), derive_stream(1, 1))


def test_summary_to_result_plug_in():
    params = build_population_pattern(PopulationDescriptor(2, 4, 0.7, 0, 0.0))
    s = sample_continuous(params, 400, derive_stream(91, 14))
    spec = independent_cluster_spec(2, 4, phi_free=False)
    summary = fit_bayes(s.x, spec, rng=derive_stream(91, 15), mcmc=FAST)
    S = np.corrcoef(s.x, rowvar=False)
    res = summary_to_result(summary, S, 400, spec)
    assert res.method == "BAYES"
    assert "plug_in_fit" in res.notes
    assert res.f_min >= 0
    assert np.all(determinacy_bl(res.params) <= 1.0)


def test_write_trace_csv(tmp_path, rng):
    draws = rng.standard_normal((3, 2, 2))
    path = tmp_path / "trace.csv"
    write_trace_csv(draws, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "parameter", "value"]
    assert len(rows) == 1 + 3 * 4
    assert rows[1][1] == "lambda[0,0]"
