"""Data generation: multivariate-normal factor scores and symmetric categorization.

Samples retain the factor scores and unique scores that produced each
observation, so predictor quality can later be judged against the truth.
Categorization cuts each variable at fixed z-thresholds chosen so the
category masses follow a symmetric binomial distribution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import binom, norm

from .model import FactorModelParams

__all__ = [
    "GeneratedSample",
    "sample_continuous",
    "binomial_thresholds",
    "categorize",
    "sample_moments",
    "derive_stream",
    "write_sample_csv",
]


@dataclass
class GeneratedSample:
    """Observed scores plus the latent scores that generated them.

    ``x`` holds continuous values when ``c == 0`` and integer category
    codes ``0 .. c-1`` otherwise. ``thresholds`` is empty for continuous
    samples.
    """

    x: np.ndarray          # n x p
    xi_true: np.ndarray    # n x q
    eps_true: np.ndarray   # n x p
    c: int = 0
    thresholds: np.ndarray = None

    def __post_init__(self):
        if self.thresholds is None:
            self.thresholds = np.empty(0)
        self.thresholds = np.asarray(self.thresholds, dtype=float)
        n, p = self.x.shape
        if n < 1:
            raise ValueError("sample must contain at least one row")
        if self.xi_true.shape[0] != n or self.eps_true.shape != (n, p):
            raise ValueError("latent score matrices are dimensionally inconsistent")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def is_categorical(self) -> bool:
        return self.c >= 2


def derive_stream(master_seed: int, *indices: int) -> np.random.Generator:
    """Independent generator for one (cell, replication) task.

    Streams are derived by feeding ``(master_seed, *indices)`` as the
    entropy of a :class:`numpy.random.SeedSequence`, whose hashing mixes
    the words into an independent 128-bit state. The derivation depends
    only on the index values, never on scheduling order.
    """
    ss = np.random.SeedSequence([int(master_seed), *[int(i) for i in indices]])
    return np.random.default_rng(ss)


def sample_continuous(params: FactorModelParams, n: int,
                      rng: np.random.Generator) -> GeneratedSample:
    """Draw ``n`` cases of ``x = xi Lambda' + eps`` with known latent scores.

    ``xi`` rows are i.i.d. N(0, Phi) via the Cholesky factor of Phi and
    ``eps`` rows are i.i.d. N(0, Theta).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    try:
        chol_phi = np.linalg.cholesky(params.phi)
        chol_theta = np.linalg.cholesky(params.theta)
    except np.linalg.LinAlgError as exc:
        raise ValueError("phi and theta must be positive definite") from exc
    q = params.q
    p = params.p
    xi = rng.standard_normal((n, q)) @ chol_phi.T
    eps = rng.standard_normal((n, p)) @ chol_theta.T
    x = xi @ params.lam.T + eps
    return GeneratedSample(x=x, xi_true=xi, eps_true=eps, c=0)


def binomial_thresholds(c: int) -> np.ndarray:
    """Cut points that give N(0,1) category masses Binomial(c-1, 1/2).

    tau_k = InverseNormalCDF( sum of the first k binomial masses ),
    k = 1 .. c-1; symmetric about zero by the symmetry of the masses.
    """
    if c < 2:
        raise ValueError("category count must be >= 2")
    k = np.arange(1, c)
    cum = binom.cdf(k - 1, c - 1, 0.5)
    tau = norm.ppf(cum)
    # enforce exact symmetry against ppf round-off
    tau = 0.5 * (tau - tau[::-1])
    return tau


def categorize(sample: GeneratedSample, thresholds: np.ndarray) -> GeneratedSample:
    """Discretize a continuous sample; latent scores pass through unchanged.

    Each value becomes the count of thresholds strictly below it, so a
    value exactly at a cut point falls in the lower category.
    """
    if sample.is_categorical:
        raise ValueError("sample is already categorical")
    thresholds = np.asarray(thresholds, dtype=float)
    if thresholds.size == 0:
        return replace(sample)
    if np.any(np.diff(thresholds) <= 0):
        raise ValueError("thresholds must be strictly ascending")
    codes = (sample.x[:, :, None] > thresholds[None, None, :]).sum(axis=2)
    return GeneratedSample(
        x=codes.astype(float),
        xi_true=sample.xi_true,
        eps_true=sample.eps_true,
        c=thresholds.size + 1,
        thresholds=thresholds,
    )


def sample_moments(x: np.ndarray):
    """Mean vector and unbiased covariance (divisor n-1) of the rows of x."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2:
        raise ValueError("need at least two rows for a covariance")
    mean = x.mean(axis=0)
    xc = x - mean
    S = xc.T @ xc / (x.shape[0] - 1)
    return mean, 0.5 * (S + S.T)


def write_sample_csv(sample: GeneratedSample, path) -> None:
    """Dump observed and true factor scores for cross-tool validation."""
    p = sample.x.shape[1]
    q = sample.xi_true.shape[1]
    header = [f"x{i+1}" for i in range(p)] + [f"xi{j+1}" for j in range(q)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row_x, row_xi in zip(sample.x, sample.xi_true):
            writer.writerow([repr(float(v)) for v in row_x]
                            + [repr(float(v)) for v in row_xi])
