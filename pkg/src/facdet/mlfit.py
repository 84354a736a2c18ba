"""Maximum-likelihood CFA fitting on a sample covariance matrix.

Minimizes ``F = ln|Sigma(theta)| - ln|S| + tr(S Sigma(theta)^-1) - p``
over free loadings, free factor inter-correlations and log-scaled unique
variances. Inter-correlations are mapped through tanh so any parameter
vector yields an admissible correlation matrix; a non-positive-definite
assembled matrix rejects the step. Optimization is limited-memory
quasi-Newton followed by a damped Newton polish so the returned optimum
satisfies a strict first-order criterion.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .model import FactorModelParams

__all__ = [
    "ModelSpec",
    "EstimationResult",
    "independent_cluster_spec",
    "start_values",
    "ml_discrepancy",
    "ml_value_and_gradient",
    "ml_gradient",
    "fit_ml",
    "canonicalize_signs",
    "result_to_json",
]

GRAD_TOL = 1e-7
_PENALTY = 1e10


@dataclass
class ModelSpec:
    """Which loadings are free and whether factor correlations are estimated."""

    pattern: np.ndarray          # p x q boolean mask of free loadings
    phi_free: bool = True

    def __post_init__(self):
        self.pattern = np.asarray(self.pattern, dtype=bool)
        counts_var = self.pattern.sum(axis=1)
        counts_fac = self.pattern.sum(axis=0)
        if np.any(counts_var < 1):
            raise ValueError("every variable needs at least one free loading")
        if np.any(counts_fac < 2):
            raise ValueError("every factor needs at least two indicators")

    @property
    def p(self) -> int:
        return self.pattern.shape[0]

    @property
    def q(self) -> int:
        return self.pattern.shape[1]

    @property
    def n_loadings(self) -> int:
        return int(self.pattern.sum())

    @property
    def n_phi(self) -> int:
        return self.q * (self.q - 1) // 2 if self.phi_free else 0

    def n_free(self, with_theta: bool = True) -> int:
        return self.n_loadings + self.n_phi + (self.p if with_theta else 0)

    def degrees_of_freedom(self, with_theta: bool = True) -> int:
        return self.p * (self.p + 1) // 2 - self.n_free(with_theta)


def independent_cluster_spec(q: int, p_per_factor: int, phi_free: bool) -> ModelSpec:
    """Salient-block pattern: variables j*ppf .. (j+1)*ppf-1 load on factor j."""
    p = q * p_per_factor
    pattern = np.zeros((p, q), dtype=bool)
    for j in range(q):
        pattern[j * p_per_factor : (j + 1) * p_per_factor, j] = True
    return ModelSpec(pattern=pattern, phi_free=phi_free)


@dataclass
class EstimationResult:
    params: FactorModelParams
    method: str
    converged: bool
    f_min: float
    iterations: int
    n: int
    df: int
    notes: tuple = field(default_factory=tuple)


def start_values(spec: ModelSpec, loading: float = 0.5) -> np.ndarray:
    """Deterministic start: loadings at ``loading``, phi at 0, uniquenesses .5."""
    return np.concatenate([
        np.full(spec.n_loadings, loading),
        np.zeros(spec.n_phi),
        np.full(spec.p, np.log(0.5)),
    ])


def _unpack(theta, spec: ModelSpec):
    lam = np.zeros((spec.p, spec.q))
    lam[spec.pattern] = theta[: spec.n_loadings]
    phi = np.eye(spec.q)
    if spec.phi_free:
        tril = np.tril_indices(spec.q, -1)
        v = np.tanh(theta[spec.n_loadings : spec.n_loadings + spec.n_phi])
        phi[tril] = v
        phi.T[tril] = v
    theta_diag = np.exp(theta[spec.n_loadings + spec.n_phi :])
    return lam, phi, theta_diag


def ml_discrepancy(S: np.ndarray, sigma: np.ndarray) -> float:
    """F_ML between a sample covariance and a model-implied covariance."""
    p = S.shape[0]
    c, low = cho_factor(sigma, lower=True)
    logdet_sigma = 2.0 * np.sum(np.log(np.diag(c)))
    _, logdet_s = np.linalg.slogdet(S)
    tr = np.trace(cho_solve((c, low), S))
    return float(logdet_sigma - logdet_s + tr - p)


def ml_value_and_gradient(theta, S, spec: ModelSpec):
    """F_ML and its analytic gradient at a free-parameter vector.

    Gradient components are ``tr[(Sigma^-1 - Sigma^-1 S Sigma^-1) dSigma/dtheta_k]``
    pushed through the tanh / log reparameterizations. A parameter vector
    whose phi assembly is not positive definite gets a large penalty value
    so the line search backs off.
    """
    lam, phi, theta_diag = _unpack(theta, spec)
    if spec.phi_free and spec.q > 1:
        if np.linalg.eigvalsh(phi)[0] <= 1e-8:
            return _PENALTY + float(theta @ theta), 2.0 * theta
    lam_phi = lam @ phi
    sigma = lam_phi @ lam.T + np.diag(theta_diag)
    try:
        c, low = cho_factor(sigma, lower=True)
    except np.linalg.LinAlgError:
        return _PENALTY + float(theta @ theta), 2.0 * theta
    p = S.shape[0]
    logdet_sigma = 2.0 * np.sum(np.log(np.diag(c)))
    _, logdet_s = np.linalg.slogdet(S)
    sigma_inv_s = cho_solve((c, low), S)
    f = logdet_sigma - logdet_s + np.trace(sigma_inv_s) - p
    sigma_inv = cho_solve((c, low), np.eye(p))
    A = sigma_inv - sigma_inv_s @ sigma_inv          # symmetric
    A = 0.5 * (A + A.T)
    g_lam = 2.0 * (A @ lam_phi)[spec.pattern]
    parts = [g_lam]
    if spec.phi_free:
        T = lam.T @ A @ lam
        tril = np.tril_indices(spec.q, -1)
        u = theta[spec.n_loadings : spec.n_loadings + spec.n_phi]
        parts.append(2.0 * T[tril] * (1.0 - np.tanh(u) ** 2))
    parts.append(np.diag(A) * theta_diag)
    return float(f), np.concatenate(parts)


def ml_gradient(theta, S, spec: ModelSpec) -> np.ndarray:
    return ml_value_and_gradient(theta, S, spec)[1]


def _newton_polish(theta, fun_grad, max_iter=15, grad_tol=GRAD_TOL):
    """Damped Newton steps on an analytic-gradient objective.

    The Hessian is built by central differences of the gradient; steps
    that fail to decrease the objective are halved, so descent stays
    monotone. Returns (theta, f, grad, n_iter).
    """
    f, g = fun_grad(theta)
    it = 0
    while np.max(np.abs(g)) > grad_tol and it < max_iter:
        it += 1
        h = 1e-6
        m = theta.size
        H = np.empty((m, m))
        for k in range(m):
            step = np.zeros(m)
            step[k] = h
            gp = fun_grad(theta + step)[1]
            gm = fun_grad(theta - step)[1]
            H[:, k] = (gp - gm) / (2.0 * h)
        H = 0.5 * (H + H.T)
        lam_reg = 0.0
        for _ in range(8):
            try:
                delta = np.linalg.solve(H + lam_reg * np.eye(m), -g)
                break
            except np.linalg.LinAlgError:
                lam_reg = max(10.0 * lam_reg, 1e-8)
        else:
            break
        scale = 1.0
        improved = False
        for _ in range(12):
            f_new, g_new = fun_grad(theta + scale * delta)
            if f_new <= f:
                theta = theta + scale * delta
                f, g = f_new, g_new
                improved = True
                break
            scale *= 0.5
        if not improved:
            break
    return theta, f, g, it


def _optimize(x0, fun_grad, maxiter):
    res = minimize(fun_grad, x0, jac=True, method="L-BFGS-B",
                   options=dict(maxiter=maxiter, maxcor=20,
                                ftol=1e-14, gtol=1e-9, maxls=60))
    theta, f, g, extra = _newton_polish(res.x, fun_grad)
    return theta, f, g, int(res.nit) + extra


def fit_ml(S: np.ndarray, spec: ModelSpec, n: int,
           max_iterations: int = 500) -> EstimationResult:
    """Fit the factor model to a covariance matrix by maximum likelihood.

    Parameters
    ----------
    S : (p, p) ndarray
        Symmetric positive definite sample covariance (or correlation)
        matrix.
    spec : ModelSpec
        Free-parameter layout; factor variances are fixed at one.
    n : int
        Number of observations behind ``S``; must exceed p.

    Returns
    -------
    EstimationResult
        ``converged`` requires the gradient max-norm below 1e-7. On a
        first failure the fit restarts once from loadings at .3.
    """
    S = np.asarray(S, dtype=float)
    if S.shape != (spec.p, spec.p):
        raise ValueError("covariance dimension does not match the model spec")
    if not np.allclose(S, S.T, atol=1e-8):
        raise ValueError("covariance must be symmetric")
    if np.linalg.eigvalsh(S)[0] <= 0:
        raise ValueError("covariance must be positive definite")
    if n <= spec.p:
        raise ValueError("n must exceed the number of variables")

    fun_grad = lambda th: ml_value_and_gradient(th, S, spec)
    theta, f, g, iters = _optimize(start_values(spec), fun_grad, max_iterations)
    notes = []
    if np.max(np.abs(g)) > GRAD_TOL:
        theta, f, g, it2 = _optimize(start_values(spec, loading=0.3),
                                     fun_grad, max_iterations)
        iters += it2
        notes.append("restarted")
    converged = bool(np.max(np.abs(g)) <= GRAD_TOL)

    lam, phi, theta_diag = _unpack(theta, spec)
    lam, phi = canonicalize_signs(lam, phi, spec.pattern)
    params = FactorModelParams(lam=lam, phi=phi, theta=np.diag(theta_diag))
    return EstimationResult(params=params, method="ML", converged=converged,
                            f_min=float(f), iterations=iters, n=int(n),
                            df=spec.degrees_of_freedom(with_theta=True),
                            notes=tuple(notes))


def canonicalize_signs(lam, phi, pattern):
    """Flip factor signs so each factor's salient-block loading mean is positive.

    Factor sign is unidentified; fixing it here keeps score predictors
    positively oriented toward their factors.
    """
    lam = lam.copy()
    phi = phi.copy()
    for j in range(lam.shape[1]):
        block = lam[pattern[:, j], j]
        if block.size and block.mean() < 0:
            lam[:, j] = -lam[:, j]
            phi[j, :] = -phi[j, :]
            phi[:, j] = -phi[:, j]
    return lam, phi


def result_to_json(result: EstimationResult) -> str:
    """Serialize estimates as a JSON document (lambda row-major)."""
    payload = {
        "method": result.method,
        "converged": result.converged,
        "f_min": result.f_min,
        "iterations": result.iterations,
        "n": result.n,
        "df": result.df,
        "lambda": [list(map(float, row)) for row in result.params.lam],
        "phi": [list(map(float, row)) for row in result.params.phi],
        "theta_diag": list(map(float, result.params.theta_diag())),
    }
    return json.dumps(payload, indent=2)
