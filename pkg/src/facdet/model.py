"""Factor model parameter containers and population pattern construction.

The observed-variable covariance implied by a factor model is
``Sigma = Lambda Phi Lambda' + Theta`` with loadings ``Lambda`` (p x q),
factor correlations ``Phi`` (q x q, unit diagonal) and residual covariance
``Theta`` (p x p, diagonal in every simulated condition but stored as a
full matrix so correlated residuals remain representable).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FactorModelParams",
    "PopulationDescriptor",
    "build_population_pattern",
    "implied_covariance",
    "residual_decomposition",
]

_EIG_TOL = 1e-10


class InvalidModelError(ValueError):
    """Raised when matrices violate the factor-model invariants."""


def _assert_symmetric(m, name, tol=1e-10):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidModelError(f"{name} must be square, got shape {m.shape}")
    if not np.allclose(m, m.T, atol=tol):
        raise InvalidModelError(f"{name} must be symmetric")


def _min_eig(m):
    return float(np.linalg.eigvalsh(m)[0])


@dataclass
class FactorModelParams:
    """One set of factor-model matrices, population or estimated.

    Attributes
    ----------
    lam : (p, q) ndarray
        Loadings on the standardized metric.
    phi : (q, q) ndarray
        Factor correlation matrix; symmetric, unit diagonal, positive
        definite.
    theta : (p, p) ndarray
        Residual covariance; symmetric positive definite.
    """

    lam: np.ndarray
    phi: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.phi = np.asarray(self.phi, dtype=float)
        self.theta = np.asarray(self.theta, dtype=float)

    @property
    def p(self) -> int:
        return self.lam.shape[0]

    @property
    def q(self) -> int:
        return self.lam.shape[1]

    def validate(self) -> "FactorModelParams":
        """Check all invariants, raising :class:`InvalidModelError` on failure."""
        if self.lam.ndim != 2:
            raise InvalidModelError("lam must be a p x q matrix")
        p, q = self.lam.shape
        _assert_symmetric(self.phi, "phi")
        if self.phi.shape != (q, q):
            raise InvalidModelError("phi has wrong dimension")
        if not np.allclose(np.diag(self.phi), 1.0, atol=1e-10):
            raise InvalidModelError("phi must have unit diagonal")
        if _min_eig(self.phi) <= 0:
            raise InvalidModelError("phi must be positive definite")
        _assert_symmetric(self.theta, "theta")
        if self.theta.shape != (p, p):
            raise InvalidModelError("theta has wrong dimension")
        if np.any(np.diag(self.theta) <= 0):
            raise InvalidModelError("theta diagonal entries must be positive")
        if _min_eig(self.theta) <= 0:
            raise InvalidModelError("theta must be positive definite")
        if _min_eig(implied_covariance(self)) <= 0:
            raise InvalidModelError("implied covariance is not positive definite")
        return self

    def theta_diag(self) -> np.ndarray:
        return np.diag(self.theta).copy()


@dataclass
class PopulationDescriptor:
    """Compact description of one simulated population model.

    ``q`` factors, ``p_per_factor`` salient indicators per factor with
    loading ``sl``; when ``cl`` is 1 the first indicator of every factor
    block carries a secondary loading of ``sl / 2`` on the next factor
    (cyclically, so the last block points back at the first factor).
    ``phi_offdiag`` is the common inter-correlation of all factor pairs.
    """

    q: int
    p_per_factor: int
    sl: float
    cl: int = 0
    phi_offdiag: float = 0.0

    def __post_init__(self):
        if self.q < 1:
            raise InvalidModelError("q must be >= 1")
        if self.p_per_factor < 2:
            raise InvalidModelError("p_per_factor must be >= 2")
        if not 0.0 < self.sl < 1.0:
            raise InvalidModelError("sl must lie in (0, 1)")
        if self.cl not in (0, 1):
            raise InvalidModelError("cl must be 0 or 1")
        if not 0.0 <= self.phi_offdiag < 1.0:
            raise InvalidModelError("phi_offdiag must lie in [0, 1)")

    @property
    def p(self) -> int:
        return self.q * self.p_per_factor


def build_population_pattern(desc: PopulationDescriptor) -> FactorModelParams:
    """Construct population matrices from a descriptor.

    Residual variances are derived as 1 minus the communality so every
    observed variable has unit variance. Raises if any communality
    reaches 1.
    """
    q, ppf = desc.q, desc.p_per_factor
    p = desc.p
    lam = np.zeros((p, q))
    for j in range(q):
        lam[j * ppf : (j + 1) * ppf, j] = desc.sl
        if desc.cl and q > 1:
            lam[j * ppf, (j + 1) % q] = desc.sl / 2.0
    phi = np.full((q, q), desc.phi_offdiag)
    np.fill_diagonal(phi, 1.0)
    communality = np.einsum("ij,jk,ik->i", lam, phi, lam)
    if np.any(communality >= 1.0):
        raise InvalidModelError(
            f"descriptor yields communality >= 1 (max {communality.max():.4f})"
        )
    theta = np.diag(1.0 - communality)
    return FactorModelParams(lam=lam, phi=phi, theta=theta).validate()


def implied_covariance(params: FactorModelParams) -> np.ndarray:
    """Model-implied covariance ``Lambda Phi Lambda' + Theta``."""
    sigma = params.lam @ params.phi @ params.lam.T + params.theta
    return 0.5 * (sigma + sigma.T)


def residual_decomposition(S: np.ndarray, params: FactorModelParams):
    """Split a sample covariance into the model part and the residual part.

    Returns ``(sigma_model, s_residual)`` with ``S = sigma_model + s_residual``.
    """
    S = np.asarray(S, dtype=float)
    sigma_model = implied_covariance(params)
    if S.shape != sigma_model.shape:
        raise InvalidModelError(
            f"sample covariance shape {S.shape} does not match model ({sigma_model.shape})"
        )
    s_resid = S - sigma_model
    return sigma_model, 0.5 * (s_resid + s_resid.T)
