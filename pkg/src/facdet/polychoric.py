"""Two-stage polychoric correlation estimation for ordered categorical data.

Stage one takes thresholds from the inverse normal CDF of cumulative
margin proportions; stage two maximizes each pair's bivariate-normal
multinomial likelihood over the correlation with thresholds held fixed.
The score of the pair likelihood is analytic (the derivative of a normal
rectangle probability with respect to rho is a sum of bivariate
densities), which gives the observed information for the asymptotic
variances without noisy double differentiation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import norm

from .bvn import bvn_density, rectangle_probabilities

__all__ = [
    "DegenerateVariableError",
    "PolychoricPair",
    "PolychoricMatrix",
    "estimate_thresholds",
    "polychoric_rho",
    "polychoric_matrix",
    "polychoric_to_json",
]

_RHO_BOUND = 0.9999
_CLAMP_AT = 0.999


class DegenerateVariableError(ValueError):
    """A variable carries no information (all mass in one category)."""


class PolychoricPair(NamedTuple):
    rho: float
    asy_var: float
    flags: tuple


@dataclass
class PolychoricMatrix:
    """Pairwise polychoric correlations with their asymptotic variances.

    ``asy_var`` is condensed over the lower triangle in row-major order
    (pair (i, j), i > j). The assembled matrix is symmetric with unit
    diagonal but not guaranteed positive definite.
    """

    rho: np.ndarray
    thresholds: list
    asy_var: np.ndarray
    flags: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.rho.shape[0]


def estimate_thresholds(category_counts) -> np.ndarray:
    """Thresholds from a per-variable category histogram.

    ``tau_k`` is the inverse normal CDF of the cumulative proportion
    through category k. Empty leading or trailing categories contribute
    no usable threshold; those are dropped with a warning.
    """
    counts = np.asarray(category_counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise DegenerateVariableError("empty histogram")
    if np.count_nonzero(counts) < 2:
        raise DegenerateVariableError("all observations fall in one category")
    cum = np.cumsum(counts)[:-1] / total
    tau = norm.ppf(cum)
    finite = np.isfinite(tau)
    if not np.all(finite):
        warnings.warn("empty boundary categories: dropping unused thresholds",
                      stacklevel=2)
        tau = tau[finite]
    return tau


def _pair_nll(rho, table, bounds_i, bounds_j):
    probs = rectangle_probabilities(bounds_i, bounds_j, rho)
    mask = table > 0
    return -float(np.sum(table[mask] * np.log(np.maximum(probs[mask], 1e-300))))


def _pair_score(rho, table, bounds_i, bounds_j):
    """d/d rho of the table log-likelihood via the rectangle-density identity."""
    probs = rectangle_probabilities(bounds_i, bounds_j, rho)
    bi = np.asarray(bounds_i)
    bj = np.asarray(bounds_j)
    dens = bvn_density(np.repeat(bi, bj.size), np.tile(bj, bi.size), rho)
    dens = dens.reshape(bi.size, bj.size)
    dprob = dens[1:, 1:] - dens[:-1, 1:] - dens[1:, :-1] + dens[:-1, :-1]
    mask = table > 0
    return float(np.sum(table[mask] * dprob[mask] / np.maximum(probs[mask], 1e-300)))


def polychoric_rho(table, tau_i, tau_j) -> PolychoricPair:
    """ML polychoric correlation for one contingency table, thresholds fixed.

    A 2x2 table with an empty cell is smoothed by adding one half to
    every cell; estimates beyond +-0.999 are clamped. Both events are
    reported in the flags.
    """
    table = np.asarray(table, dtype=float)
    if table.sum() < 2:
        raise ValueError("table must contain at least two observations")
    flags = []
    if table.shape == (2, 2) and np.any(table == 0):
        table = table + 0.5
        flags.append("smoothed")
    bounds_i = np.concatenate([[-np.inf], np.asarray(tau_i, float), [np.inf]])
    bounds_j = np.concatenate([[-np.inf], np.asarray(tau_j, float), [np.inf]])
    if np.any(np.diff(bounds_i) < 0) or np.any(np.diff(bounds_j) < 0):
        raise ValueError("thresholds must be ascending")

    res = minimize_scalar(_pair_nll, bounds=(-_RHO_BOUND, _RHO_BOUND),
                          args=(table, bounds_i, bounds_j),
                          method="bounded", options={"xatol": 1e-8})
    rho = float(res.x)
    if abs(rho) > _CLAMP_AT:
        rho = np.sign(rho) * _CLAMP_AT
        flags.append("clamped")

    h = 1e-5
    info = -(_pair_score(rho + h, table, bounds_i, bounds_j)
             - _pair_score(rho - h, table, bounds_i, bounds_j)) / (2.0 * h)
    if info <= 0 or not np.isfinite(info):
        flags.append("flat_information")
        asy_var = np.inf
    else:
        asy_var = 1.0 / info
    return PolychoricPair(rho=rho, asy_var=float(asy_var), flags=tuple(flags))


def _recode_column(col):
    values, codes = np.unique(col, return_inverse=True)
    return codes, values.size


def polychoric_matrix(x) -> PolychoricMatrix:
    """Pairwise polychoric matrix of an n x p categorical score matrix."""
    x = np.asarray(x)
    if not np.allclose(x, np.round(x)):
        raise ValueError("polychoric estimation requires categorical codes")
    n, p = x.shape
    codes = np.empty((n, p), dtype=np.int64)
    n_cats = np.empty(p, dtype=int)
    thresholds = []
    for v in range(p):
        codes[:, v], n_cats[v] = _recode_column(x[:, v])
        if n_cats[v] < 2:
            raise DegenerateVariableError(f"variable {v} has a single category")
        counts = np.bincount(codes[:, v], minlength=n_cats[v])
        thresholds.append(estimate_thresholds(counts))

    rho = np.eye(p)
    asy_var = np.empty(p * (p - 1) // 2)
    flags = {}
    k = 0
    for i in range(1, p):
        for j in range(i):
            table = np.bincount(codes[:, i] * n_cats[j] + codes[:, j],
                                minlength=n_cats[i] * n_cats[j])
            table = table.reshape(n_cats[i], n_cats[j])
            try:
                pair = polychoric_rho(table, thresholds[i], thresholds[j])
            except Exception as exc:
                raise RuntimeError(f"polychoric failure for pair ({i}, {j})") from exc
            rho[i, j] = rho[j, i] = pair.rho
            asy_var[k] = pair.asy_var
            if pair.flags:
                flags[(i, j)] = pair.flags
            k += 1
    return PolychoricMatrix(rho=rho, thresholds=thresholds,
                            asy_var=asy_var, flags=flags)


def polychoric_to_json(poly: PolychoricMatrix) -> str:
    payload = {
        "rho": [list(map(float, row)) for row in poly.rho],
        "thresholds": [list(map(float, t)) for t in poly.thresholds],
        "asy_var": list(map(float, poly.asy_var)),
        "flags": {f"{i},{j}": list(v) for (i, j), v in poly.flags.items()},
    }
    return json.dumps(payload, indent=2)
