"""Diagonally weighted least squares fit to a polychoric correlation matrix.

Minimizes ``sum_k w_k (r_k - sigma_k(theta))^2`` over the non-redundant
correlations with weights from the inverse asymptotic variances of the
polychoric estimates. Delta parameterization: the implied diagonal is
fixed at one and uniquenesses are derived as one minus the communality.
Communalities are kept below a cap by a smooth quadratic penalty so
near-Heywood solutions stay admissible instead of crossing into negative
residual variance.
"""

from __future__ import annotations

import numpy as np

from .model import FactorModelParams
from .mlfit import (GRAD_TOL, EstimationResult, ModelSpec, _newton_polish,
                    canonicalize_signs)
from .polychoric import PolychoricMatrix
from scipy.optimize import minimize

__all__ = ["fit_dwls", "dwls_value_and_gradient"]

_COMM_CAP = 0.995


def dwls_value_and_gradient(theta, r_obs, weights, spec: ModelSpec,
                            penalty_weight: float):
    """Weighted least-squares discrepancy on correlations plus cap penalty."""
    p, q = spec.p, spec.q
    lam = np.zeros((p, q))
    lam[spec.pattern] = theta[: spec.n_loadings]
    phi = np.eye(q)
    tril_q = np.tril_indices(q, -1)
    if spec.phi_free:
        u = theta[spec.n_loadings :]
        v = np.tanh(u)
        phi[tril_q] = v
        phi.T[tril_q] = v
    lam_phi = lam @ phi
    C = lam_phi @ lam.T
    tril_p = np.tril_indices(p, -1)
    d = r_obs - C[tril_p]
    f = float(np.sum(weights * d * d))

    wd = np.zeros((p, p))
    wd[tril_p] = weights * d
    wd = wd + wd.T
    g_lam_full = -2.0 * (wd @ lam_phi)

    comm = np.diag(C)
    over = np.maximum(comm - _COMM_CAP, 0.0)
    f += penalty_weight * float(np.sum(over * over))
    g_lam_full += penalty_weight * 4.0 * over[:, None] * lam_phi

    parts = [g_lam_full[spec.pattern]]
    if spec.phi_free:
        T = lam.T @ wd @ lam
        g_phi = -2.0 * T[tril_q]
        g_phi += penalty_weight * 4.0 * (lam.T * over).dot(lam)[tril_q]
        parts.append(g_phi * (1.0 - np.tanh(u) ** 2))
    return f, np.concatenate(parts)


def fit_dwls(poly: PolychoricMatrix, spec: ModelSpec, n: int = 0,
             max_iterations: int = 500) -> EstimationResult:
    """Fit the factor model to polychoric correlations by DWLS.

    Weights are normalized to unit mean so the objective scale does not
    depend on the sample size; a non-finite weight anywhere switches the
    whole fit to unit weights (flagged in the result notes).
    """
    if poly.p != spec.p:
        raise ValueError("polychoric matrix does not match the model spec")
    tril_p = np.tril_indices(spec.p, -1)
    r_obs = poly.rho[tril_p]
    weights = 1.0 / np.asarray(poly.asy_var, dtype=float)
    notes = []
    if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
        weights = np.ones_like(r_obs)
        notes.append("uls_fallback")
    weights = weights / weights.mean()
    penalty_weight = 1e3 * spec.p

    x0 = np.concatenate([np.full(spec.n_loadings, 0.5), np.zeros(spec.n_phi)])
    fun_grad = lambda th: dwls_value_and_gradient(th, r_obs, weights, spec,
                                                  penalty_weight)
    res = minimize(fun_grad, x0, jac=True, method="L-BFGS-B",
                   options=dict(maxiter=max_iterations, maxcor=20,
                                ftol=1e-15, gtol=1e-10, maxls=60))
    theta, f, g, extra = _newton_polish(res.x, fun_grad)
    iters = int(res.nit) + extra
    if np.max(np.abs(g)) > GRAD_TOL:
        x0b = np.concatenate([np.full(spec.n_loadings, 0.3), np.zeros(spec.n_phi)])
        res = minimize(fun_grad, x0b, jac=True, method="L-BFGS-B",
                       options=dict(maxiter=max_iterations, maxcor=20,
                                    ftol=1e-15, gtol=1e-10, maxls=60))
        theta, f, g, extra = _newton_polish(res.x, fun_grad)
        iters += int(res.nit) + extra
        notes.append("restarted")
    converged = bool(np.max(np.abs(g)) <= GRAD_TOL)

    lam = np.zeros((spec.p, spec.q))
    lam[spec.pattern] = theta[: spec.n_loadings]
    phi = np.eye(spec.q)
    if spec.phi_free:
        tril_q = np.tril_indices(spec.q, -1)
        v = np.tanh(theta[spec.n_loadings :])
        phi[tril_q] = v
        phi.T[tril_q] = v
    lam, phi = canonicalize_signs(lam, phi, spec.pattern)
    theta_diag = 1.0 - np.einsum("ij,jk,ik->i", lam, phi, lam)
    if np.any(theta_diag < 1e-6):
        # penalty overshoot past the cap; floor so the result stays admissible
        theta_diag = np.maximum(theta_diag, 1e-6)
        notes.append("theta_floored")
    params = FactorModelParams(lam=lam, phi=phi, theta=np.diag(theta_diag))
    return EstimationResult(params=params, method="DWLS", converged=converged,
                            f_min=float(f), iterations=iters, n=int(n),
                            df=spec.degrees_of_freedom(with_theta=False),
                            notes=tuple(notes))
