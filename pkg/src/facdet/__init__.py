"""Factor score determinacy under categorical observed variables.

A simulation laboratory around one question: how far do parameter-based
determinacy coefficients drift from the correlation a factor score
predictor actually achieves with the factor scores, once observed
variables are categorized and parameters are estimated by ML, DWLS on
polychorics, or Gibbs-sampled Bayesian CFA.
"""

__version__ = "0.1.0"

from .model import (FactorModelParams, PopulationDescriptor,
                    build_population_pattern, implied_covariance,
                    residual_decomposition)
from .datagen import (GeneratedSample, binomial_thresholds, categorize,
                      derive_stream, sample_continuous, sample_moments)
from .mlfit import (EstimationResult, ModelSpec, fit_ml,
                    independent_cluster_spec, start_values)
from .polychoric import (PolychoricMatrix, estimate_thresholds,
                         polychoric_matrix, polychoric_rho)
from .dwls import fit_dwls
from .bayes import (McmcSettings, PosteriorSummary, PriorSpec, fit_bayes,
                    posterior_predictive_p)
from .scoring import (DeterminacyRecord, best_linear_weights, budescu_correct,
                      cp_weights, determinacy_bl, determinacy_blc,
                      determinacy_cp, determinacy_sbl, psd_inv_sqrt, psd_sqrt,
                      score_based_determinacy)
from .fitstats import FitReport, compute_fit
from .simulation import (CellSummary, ConditionSpec, RunOptions,
                         full_sample_grid, population_grid,
                         run_population_cell, run_sample_cell, run_grid)

__all__ = [name for name in dir() if not name.startswith("_")]
