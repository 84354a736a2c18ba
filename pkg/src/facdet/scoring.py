"""Factor score predictors, determinacy coefficients, and bias bookkeeping.

Parameter-based determinacies are computed from fitted model matrices;
score-based determinacies correlate predictor scores with the factor
scores that generated the data. The difference between the two is the
bias a practitioner would never see outside a simulation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import FactorModelParams, implied_covariance
from .mlfit import EstimationResult

__all__ = [
    "psd_sqrt",
    "psd_inv_sqrt",
    "best_linear_weights",
    "cp_weights",
    "determinacy_bl",
    "determinacy_sbl",
    "determinacy_blc",
    "determinacy_cp",
    "budescu_correct",
    "score_based_determinacy",
    "DeterminacyRecord",
]

_PSD_TOL = 1e-10


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Eigenvalues in [-1e-10, 0] are treated as round-off and clamped to
    zero; anything more negative raises.
    """
    M = np.asarray(M, dtype=float)
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    if w[0] < -_PSD_TOL:
        raise ValueError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    w = np.maximum(w, 0.0)
    return (V * np.sqrt(w)) @ V.T


def psd_inv_sqrt(M: np.ndarray) -> np.ndarray:
    """Inverse symmetric square root; requires eigenvalues above 1e-10."""
    M = np.asarray(M, dtype=float)
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    if w[0] <= _PSD_TOL:
        raise ValueError(f"matrix is numerically singular (min eigenvalue {w[0]:.3e})")
    return (V / np.sqrt(w)) @ V.T


def best_linear_weights(params: FactorModelParams) -> np.ndarray:
    """Weights of the best linear predictor: ``Sigma^-1 Lambda Phi``."""
    sigma = implied_covariance(params)
    try:
        return np.linalg.solve(sigma, params.lam @ params.phi)
    except np.linalg.LinAlgError as exc:
        raise ValueError("implied covariance is singular") from exc


def cp_weights(params: FactorModelParams) -> np.ndarray:
    """Weights of the correlation-preserving predictor.

    ``W = Sigma^-1 Lambda (Lambda' Sigma^-1 Lambda)^{-1/2} Phi^{1/2}``;
    under the model the predictor covariance then equals Phi exactly.
    """
    sigma = implied_covariance(params)
    sinv_lam = np.linalg.solve(sigma, params.lam)
    inner = params.lam.T @ sinv_lam
    return sinv_lam @ psd_inv_sqrt(inner) @ psd_sqrt(params.phi)


def _clamped_sqrt_diag(M: np.ndarray) -> np.ndarray:
    d = np.diag(M).copy()
    if np.any(d < -_PSD_TOL):
        raise ValueError(f"negative squared determinacy beyond tolerance: {d.min():.3e}")
    return np.sqrt(np.clip(d, 0.0, 1.0))


def determinacy_bl(params: FactorModelParams) -> np.ndarray:
    """Per-factor determinacy of the best linear predictor (model metric)."""
    sigma = implied_covariance(params)
    M = params.phi @ params.lam.T @ np.linalg.solve(sigma, params.lam) @ params.phi
    return _clamped_sqrt_diag(M)


def determinacy_sbl(params: FactorModelParams, S: np.ndarray) -> np.ndarray:
    """Sample-covariance variant of the best linear determinacy.

    Known to be more biased than the model-implied form; reported for
    completeness only.
    """
    S = np.asarray(S, dtype=float)
    M = params.phi @ params.lam.T @ np.linalg.solve(S, params.lam) @ params.phi
    return _clamped_sqrt_diag(M)


def determinacy_blc(ml: EstimationResult, cat: EstimationResult) -> np.ndarray:
    """Combined determinacy for categorical-variable predictors.

    The predictor is built from the categorical-estimation weights
    (``Sigma_c^-1 Lambda_c Phi_c``) but its covariance with the factors
    and its variance are taken under the structure fitted to the
    categorical scores themselves, so the categorical nature of the
    aggregated variables is not wished away.
    """
    lam_c, phi_c = cat.params.lam, cat.params.phi
    sigma_c = implied_covariance(cat.params)
    lam_m, phi_m = ml.params.lam, ml.params.phi
    sigma_m = implied_covariance(ml.params)
    try:
        w_c = np.linalg.solve(sigma_c, lam_c) @ phi_c
    except np.linalg.LinAlgError as exc:
        raise ValueError("categorical implied covariance is singular") from exc
    num = np.diag(w_c.T @ lam_m @ phi_m)
    var = np.diag(w_c.T @ sigma_m @ w_c)
    if np.any(var <= 0):
        raise ValueError("predictor variance is not positive")
    return np.clip(num / np.sqrt(var), 0.0, 1.0)


def determinacy_cp(params: FactorModelParams) -> np.ndarray:
    """Per-factor determinacy of the correlation-preserving predictor.

    The predictor already has unit variance per factor (its covariance
    is Phi), so the cross-covariance diagonal is itself the correlation;
    no square root is involved, unlike the best linear case.
    """
    sigma = implied_covariance(params)
    sinv_lam = np.linalg.solve(sigma, params.lam)
    inner = params.lam.T @ sinv_lam
    M = psd_sqrt(params.phi) @ psd_inv_sqrt(inner) @ inner @ params.phi
    return np.clip(np.diag(M), 0.0, 1.0)


def budescu_correct(P, p: int, n: int):
    """Sampling-error correction of a determinacy coefficient.

    Subtracts ``omega = ((p-2)/(n-p-1))(1-P^2) + (2(n-3)/((n-p)^2-1))(1-P^2)^2``
    from the squared coefficient before taking the root. Returns
    ``(corrected, clamped)`` where ``clamped`` marks entries whose
    corrected square fell below zero.
    """
    if n <= p + 1:
        raise ValueError("correction undefined for n <= p + 1")
    P = np.asarray(P, dtype=float)
    if np.any(P < 0) or np.any(P > 1):
        raise ValueError("determinacies must lie in [0, 1]")
    u = 1.0 - P**2
    omega = ((p - 2) / (n - p - 1)) * u + (2.0 * (n - 3) / ((n - p) ** 2 - 1)) * u**2
    sq = P**2 - omega
    clamped = sq < 0
    return np.sqrt(np.maximum(sq, 0.0)), clamped


def score_based_determinacy(predictor_scores: np.ndarray,
                            xi_true: np.ndarray) -> np.ndarray:
    """Column-wise Pearson correlation of predictor scores with true scores.

    Callers must have sign-aligned the predictors (see
    :func:`facdet.mlfit.canonicalize_signs`, applied by every fitter).
    A zero-variance predictor column yields NaN for that factor.
    """
    pred = np.asarray(predictor_scores, dtype=float)
    xi = np.asarray(xi_true, dtype=float)
    if pred.shape != xi.shape:
        raise ValueError("predictor and true score shapes differ")
    pc = pred - pred.mean(axis=0)
    xc = xi - xi.mean(axis=0)
    num = np.sum(pc * xc, axis=0)
    den = np.sqrt(np.sum(pc * pc, axis=0) * np.sum(xc * xc, axis=0))
    out = np.full(pred.shape[1], np.nan)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


@dataclass
class DeterminacyRecord:
    """Per-factor determinacies for one fitted model on one data set.

    ``method`` tags the parameter source (``ml``, ``wlsmv``, ``bayes`` or
    ``wlsmv_ml`` for the combined coefficient). Fields that do not apply
    to a method stay None. Corrected variants are present only for
    sample-level runs.
    """

    method: str
    score_bl: np.ndarray = None
    p_bl: np.ndarray = None
    p_bl_corrected: np.ndarray = None
    p_sbl: np.ndarray = None
    score_blc: np.ndarray = None
    p_blc: np.ndarray = None
    p_blc_corrected: np.ndarray = None
    score_cp: np.ndarray = None
    p_cp: np.ndarray = None
    p_cp_corrected: np.ndarray = None
    notes: tuple = field(default_factory=tuple)

    _PAIRS = (
        ("p_bl", "score_bl"),
        ("p_bl_corrected", "score_bl"),
        ("p_sbl", "score_bl"),
        ("p_blc", "score_blc"),
        ("p_blc_corrected", "score_blc"),
        ("p_cp", "score_cp"),
        ("p_cp_corrected", "score_cp"),
    )

    def bias(self, coefficient: str) -> np.ndarray:
        """Parameter-based minus score-based, per factor."""
        for coef, ref in self._PAIRS:
            if coef == coefficient:
                value = getattr(self, coef)
                reference = getattr(self, ref)
                if value is None or reference is None:
                    raise ValueError(f"{coefficient} not available in this record")
                return value - reference
        raise KeyError(f"unknown coefficient {coefficient!r}")

    def coefficients(self):
        """(name, per-factor values, per-factor bias or None) triples."""
        out = []
        ref_map = dict(self._PAIRS)
        for name in ("score_bl", "p_bl", "p_bl_corrected", "p_sbl",
                     "score_blc", "p_blc", "p_blc_corrected",
                     "score_cp", "p_cp", "p_cp_corrected"):
            value = getattr(self, name)
            if value is None:
                continue
            ref = ref_map.get(name)
            bias = value - getattr(self, ref) if ref and getattr(self, ref) is not None else None
            out.append((name, value, bias))
        return out

    def csv_rows(self, cell_keys: dict = None):
        """One serializable dict per coefficient, with per-factor values."""
        rows = []
        for name, values, bias in self.coefficients():
            row = dict(cell_keys or {})
            row.update({
                "method": self.method,
                "coefficient": name,
                "per_factor": ";".join(f"{v:.12g}" for v in np.atleast_1d(values)),
                "mean": f"{float(np.mean(values)):.12g}",
                "bias": "" if bias is None else f"{float(np.mean(bias)):.12g}",
            })
            rows.append(row)
        return rows
