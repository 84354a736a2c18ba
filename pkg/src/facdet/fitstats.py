"""Chi-square based fit statistics for maximum-likelihood factor models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .mlfit import EstimationResult
from .model import implied_covariance

__all__ = ["FitReport", "compute_fit"]


@dataclass
class FitReport:
    chi_square: float
    df: int
    p_value: float
    rmsea: float
    cfi: float
    srmr: float
    baseline_chi_square: float
    baseline_df: int


def compute_fit(result: EstimationResult, S: np.ndarray, n: int) -> FitReport:
    """Fit statistics from a converged fit and the covariance it was fit to.

    chi2 uses the (n-1) multiplier matching the covariance divisor; the
    CFI baseline is the diagonal-covariance (independence) model, whose
    ML discrepancy has the closed form ``ln|diag(S)| - ln|S|``. SRMR is
    the root mean square of the standardized residuals over the
    p(p+1)/2 lower triangle. The tail probability comes from the
    regularized incomplete gamma function.
    """
    if result.df <= 0:
        raise ValueError("model has no positive degrees of freedom")
    S = np.asarray(S, dtype=float)
    p = S.shape[0]
    chi_square = (n - 1) * max(result.f_min, 0.0)
    df = result.df
    p_value = float(chi2.sf(chi_square, df))

    rmsea = float(np.sqrt(max(chi_square - df, 0.0) / (df * (n - 1))))

    f_base = float(np.sum(np.log(np.diag(S))) - np.linalg.slogdet(S)[1])
    baseline_chi_square = (n - 1) * max(f_base, 0.0)
    baseline_df = p * (p - 1) // 2
    denom = max(baseline_chi_square - baseline_df, chi_square - df, 0.0)
    cfi = 1.0 if denom == 0 else 1.0 - max(chi_square - df, 0.0) / denom
    cfi = float(min(max(cfi, 0.0), 1.0))

    sigma = implied_covariance(result.params)
    sd = np.sqrt(np.diag(S))
    resid = (S - sigma) / np.outer(sd, sd)
    tri = np.tril_indices(p)
    srmr = float(np.sqrt(np.mean(resid[tri] ** 2)))

    return FitReport(chi_square=float(chi_square), df=int(df), p_value=p_value,
                     rmsea=rmsea, cfi=cfi, srmr=srmr,
                     baseline_chi_square=float(baseline_chi_square),
                     baseline_df=int(baseline_df))
