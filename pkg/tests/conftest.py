import numpy as np
import pytest

from facdet.model import FactorModelParams


def random_admissible_model(rng, q=None, p_per_factor=None):
    """Random factor model satisfying all parameter invariants.

    Independent-cluster loadings in [.3, .9], a random positive definite
    correlation matrix for the factors, and residual variances derived
    from unit observed variances (resampled until all stay above .05).
    """
    q = q or int(rng.integers(2, 5))
    ppf = p_per_factor or int(rng.integers(3, 6))
    p = q * ppf
    for _ in range(100):
        lam = np.zeros((p, q))
        for j in range(q):
            lam[j * ppf : (j + 1) * ppf, j] = rng.uniform(0.3, 0.9, ppf)
        a = rng.standard_normal((q, q + 2))
        cov = a @ a.T + 0.5 * np.eye(q)
        d = np.sqrt(np.diag(cov))
        phi = cov / np.outer(d, d)
        comm = np.einsum("ij,jk,ik->i", lam, phi, lam)
        if comm.max() < 0.95:
            theta = np.diag(1.0 - comm)
            return FactorModelParams(lam=lam, phi=phi, theta=theta).validate()
    raise RuntimeError("no admissible model found")


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
