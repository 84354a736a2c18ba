"""Monte Carlo orchestration over condition grids.

Two study designs share one engine: finite-population runs (one large
draw per cell, no sampling-error correction) and replicated sample runs
(per-replication seeded streams, corrected coefficients, aggregation
across replications). Output is one CSV row per
(cell, estimator, coefficient) plus a JSON manifest.
"""

from __future__ import annotations

import concurrent.futures
import csv
import json
import os
import time
from dataclasses import asdict, dataclass

import numpy as np
import scipy

from . import __version__
from .bayes import McmcSettings, PriorSpec, fit_bayes, summary_to_result
from .datagen import (binomial_thresholds, categorize, derive_stream,
                      sample_continuous, sample_moments)
from .dwls import fit_dwls
from .fitstats import compute_fit
from .mlfit import EstimationResult, fit_ml, independent_cluster_spec
from .model import PopulationDescriptor, build_population_pattern
from .polychoric import polychoric_matrix
from .scoring import (DeterminacyRecord, best_linear_weights, budescu_correct,
                      cp_weights, determinacy_bl, determinacy_blc,
                      determinacy_cp, determinacy_sbl,
                      score_based_determinacy)

__all__ = [
    "ConditionSpec",
    "RunOptions",
    "CellStat",
    "CellSummary",
    "population_grid",
    "full_sample_grid",
    "run_population_cell",
    "run_sample_cell",
    "run_grid",
    "RESULT_COLUMNS",
]

RESULT_COLUMNS = ["q", "p_per_factor", "sl", "cl", "phi", "c", "n",
                  "estimator", "coefficient", "mean", "sd", "bias",
                  "n_excluded"]

_ESTIMATOR_ORDER = ("ml", "wlsmv", "wlsmv_ml", "bayes")
_COEFFICIENT_ORDER = ("score_bl", "p_bl", "p_bl_corrected", "p_sbl",
                      "score_blc", "p_blc", "p_blc_corrected",
                      "score_cp", "p_cp", "p_cp_corrected",
                      "chi_square", "rmsea", "cfi", "srmr", "ppp", "psr_max")


@dataclass(frozen=True)
class ConditionSpec:
    """One cell of the simulation grid. ``n`` is None for population runs."""

    q: int
    p_per_factor: int
    sl: float
    cl: int
    phi: float
    c: int
    n: int = None
    replications: int = 1000
    estimators: tuple = ("ml", "wlsmv", "bayes")
    master_seed: int = 0

    def __post_init__(self):
        PopulationDescriptor(self.q, self.p_per_factor, self.sl, self.cl, self.phi)
        if self.c != 0 and self.c < 2:
            raise ValueError("c must be 0 (continuous) or >= 2")
        if self.n is not None and self.n <= self.q * self.p_per_factor:
            raise ValueError("n must exceed the number of variables")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        unknown = set(self.estimators) - {"ml", "wlsmv", "bayes"}
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")

    @property
    def p(self) -> int:
        return self.q * self.p_per_factor

    def cell_key(self):
        return (self.q, self.p_per_factor, int(round(self.sl * 100)),
                self.cl, int(round(self.phi * 100)), self.c, self.n or 0)

    def descriptor(self) -> PopulationDescriptor:
        return PopulationDescriptor(self.q, self.p_per_factor, self.sl,
                                    self.cl, self.phi)


@dataclass(frozen=True)
class RunOptions:
    population_size: int = 200_000
    mcmc_chains: int = 2
    mcmc_burn_in: int = 1000
    mcmc_draws: int = 2000
    bayes_every: int = 1          # run bayes on every k-th replication
    workers: int = None
    keep_replications: bool = False

    def mcmc(self) -> McmcSettings:
        return McmcSettings(chains=self.mcmc_chains, burn_in=self.mcmc_burn_in,
                            draws=self.mcmc_draws)


@dataclass
class CellStat:
    mean: float
    sd: float
    bias: float


@dataclass
class CellSummary:
    condition: ConditionSpec
    design: str
    stats: dict
    n_excluded: dict
    n_replications: int
    population_size: int = None

    def get(self, estimator, coefficient):
        return self.stats.get((estimator, coefficient))


def population_grid(master_seed: int, estimators=("ml", "wlsmv", "bayes")):
    """The 32 finite-population cells: q=3, p/q=5, all sl x cl x phi x c."""
    cells = []
    for sl in (0.40, 0.80):
        for cl in (0, 1):
            for phi in (0.00, 0.30):
                for c in (2, 4, 6, 8):
                    cells.append(ConditionSpec(q=3, p_per_factor=5, sl=sl, cl=cl,
                                               phi=phi, c=c, replications=1,
                                               estimators=tuple(estimators),
                                               master_seed=master_seed))
    return cells


def full_sample_grid(master_seed: int, replications: int = 1000,
                     estimators=("ml", "wlsmv", "bayes")):
    """The 256 sample-design cells."""
    cells = []
    for q in (3, 5):
        for ppf in (5, 10):
            for sl in (0.40, 0.80):
                for cl in (0, 1):
                    for phi in (0.00, 0.30):
                        for c in (2, 4, 6, 8):
                            for n in (300, 900):
                                cells.append(ConditionSpec(
                                    q=q, p_per_factor=ppf, sl=sl, cl=cl,
                                    phi=phi, c=c, n=n,
                                    replications=replications,
                                    estimators=tuple(estimators),
                                    master_seed=master_seed))
    return cells


def _correlation_from_cov(S):
    d = np.sqrt(np.diag(S))
    if np.any(d <= 0):
        raise ValueError("degenerate variable: zero variance")
    return S / np.outer(d, d)


def _predict(x_std, weights):
    return x_std @ weights


def _ml_record(result, R, x_std, xi_true, correct_n=None):
    params = result.params
    w_bl = best_linear_weights(params)
    w_cp = cp_weights(params)
    rec = DeterminacyRecord(
        method="ml",
        score_bl=score_based_determinacy(_predict(x_std, w_bl), xi_true),
        p_bl=determinacy_bl(params),
        p_sbl=determinacy_sbl(params, R),
        score_cp=score_based_determinacy(_predict(x_std, w_cp), xi_true),
        p_cp=determinacy_cp(params),
    )
    if correct_n is not None:
        p = params.p
        rec.p_bl_corrected, _ = budescu_correct(rec.p_bl, p, correct_n)
        rec.p_cp_corrected, _ = budescu_correct(rec.p_cp, p, correct_n)
    return rec


def _wlsmv_records(result_dwls, result_ml, x_std, xi_true, correct_n=None):
    params = result_dwls.params
    w_bl = best_linear_weights(params)
    w_cp = cp_weights(params)
    score_bl = score_based_determinacy(_predict(x_std, w_bl), xi_true)
    rec_w = DeterminacyRecord(
        method="wlsmv",
        score_bl=score_bl,
        p_bl=determinacy_bl(params),
        score_cp=score_based_determinacy(_predict(x_std, w_cp), xi_true),
        p_cp=determinacy_cp(params),
    )
    rec_c = None
    if result_ml is not None:
        # the combined coefficient describes the same categorical-weight
        # predictor, so its score-based reference is the wlsmv one
        rec_c = DeterminacyRecord(
            method="wlsmv_ml",
            score_blc=score_bl.copy(),
            p_blc=determinacy_blc(result_ml, result_dwls),
        )
    if correct_n is not None:
        p = params.p
        rec_w.p_bl_corrected, _ = budescu_correct(rec_w.p_bl, p, correct_n)
        rec_w.p_cp_corrected, _ = budescu_correct(rec_w.p_cp, p, correct_n)
        if rec_c is not None:
            rec_c.p_blc_corrected, _ = budescu_correct(rec_c.p_blc, p, correct_n)
    return rec_w, rec_c


def _bayes_record(summary, x_std, xi_true, correct_n=None):
    params = summary.mean_params
    w_bl = best_linear_weights(params)
    w_cp = cp_weights(params)
    rec = DeterminacyRecord(
        method="bayes",
        score_bl=score_based_determinacy(_predict(x_std, w_bl), xi_true),
        p_bl=determinacy_bl(params),
        score_cp=score_based_determinacy(_predict(x_std, w_cp), xi_true),
        p_cp=determinacy_cp(params),
    )
    if correct_n is not None:
        p = params.p
        rec.p_bl_corrected, _ = budescu_correct(rec.p_bl, p, correct_n)
        rec.p_cp_corrected, _ = budescu_correct(rec.p_cp, p, correct_n)
    return rec


def _replication(cond: ConditionSpec, rep: int, n_cases: int,
                 options: RunOptions, population: bool):
    """Generate one data set, run requested estimators, compute records.

    Returns a dict: records (list of DeterminacyRecord), fit metric
    values keyed (estimator, name), and per-estimator exclusion notes.
    """
    rng = derive_stream(cond.master_seed, *cond.cell_key(), rep)
    pop_params = build_population_pattern(cond.descriptor())
    sample = sample_continuous(pop_params, n_cases, rng)
    if cond.c >= 2:
        sample = categorize(sample, binomial_thresholds(cond.c))

    out = {"records": [], "fit": {}, "excluded": {}}
    try:
        _, S = sample_moments(sample.x)
        R = _correlation_from_cov(S)
        sd = np.sqrt(np.diag(S))
        x_std = (sample.x - sample.x.mean(axis=0)) / sd
    except ValueError as exc:
        for est in cond.estimators:
            out["excluded"][est] = f"degenerate_data: {exc}"
        return out

    spec = independent_cluster_spec(cond.q, cond.p_per_factor,
                                    phi_free=cond.phi != 0)
    correct_n = None if population else cond.n
    run_bayes = ("bayes" in cond.estimators
                 and rep % max(options.bayes_every, 1) == 0)

    res_ml = None
    if "ml" in cond.estimators:
        try:
            res_ml = fit_ml(R, spec, n_cases)
            if not res_ml.converged:
                out["excluded"]["ml"] = "non_converged"
                res_ml = None
        except Exception as exc:
            out["excluded"]["ml"] = f"error: {exc}"
            res_ml = None
    if res_ml is not None:
        out["records"].append(_ml_record(res_ml, R, x_std, sample.xi_true,
                                         correct_n))
        fit = compute_fit(res_ml, R, n_cases)
        out["fit"][("ml", "chi_square")] = fit.chi_square
        out["fit"][("ml", "rmsea")] = fit.rmsea
        out["fit"][("ml", "cfi")] = fit.cfi
        out["fit"][("ml", "srmr")] = fit.srmr

    if "wlsmv" in cond.estimators:
        if cond.c < 2:
            out["excluded"]["wlsmv"] = "requires_categorical_data"
            if "ml" in cond.estimators:
                out["excluded"]["wlsmv_ml"] = "wlsmv_unavailable"
        else:
            try:
                poly = polychoric_matrix(sample.x)
                res_dwls = fit_dwls(poly, spec)
                if not res_dwls.converged:
                    out["excluded"]["wlsmv"] = "non_converged"
                    if "ml" in cond.estimators:
                        out["excluded"]["wlsmv_ml"] = "wlsmv_unavailable"
                else:
                    rec_w, rec_c = _wlsmv_records(res_dwls, res_ml, x_std,
                                                  sample.xi_true, correct_n)
                    out["records"].append(rec_w)
                    if rec_c is not None:
                        out["records"].append(rec_c)
                    elif "ml" in cond.estimators:
                        out["excluded"]["wlsmv_ml"] = "ml_unavailable"
            except Exception as exc:
                out["excluded"]["wlsmv"] = f"error: {exc}"
                if "ml" in cond.estimators:
                    out["excluded"]["wlsmv_ml"] = "wlsmv_unavailable"

    if run_bayes:
        try:
            priors = PriorSpec()
            summary = fit_bayes(sample.x, spec, priors, options.mcmc(),
                                rng=derive_stream(cond.master_seed,
                                                  *cond.cell_key(), rep, 7))
            if not summary.converged:
                out["excluded"]["bayes"] = "psr_above_threshold"
            else:
                out["records"].append(_bayes_record(summary, x_std,
                                                    sample.xi_true, correct_n))
                res_b = summary_to_result(summary, R, n_cases, spec)
                fit_b = compute_fit(res_b, R, n_cases)
                out["fit"][("bayes", "rmsea")] = fit_b.rmsea
                out["fit"][("bayes", "cfi")] = fit_b.cfi
                out["fit"][("bayes", "ppp")] = summary.ppp
                out["fit"][("bayes", "psr_max")] = summary.psr_max
        except Exception as exc:
            out["excluded"]["bayes"] = f"error: {exc}"
    return out


def _aggregate(cond: ConditionSpec, outcomes, design: str,
               population_size=None) -> CellSummary:
    """Order-fixed reduction of replication outcomes into cell statistics."""
    values = {}     # (estimator, coefficient) -> list of factor means
    biases = {}
    excluded = {}
    for outcome in outcomes:
        for est, why in outcome["excluded"].items():
            excluded[est] = excluded.get(est, 0) + 1
        for rec in outcome["records"]:
            for name, vals, bias in rec.coefficients():
                key = (rec.method, name)
                values.setdefault(key, []).append(float(np.mean(vals)))
                if bias is not None:
                    biases.setdefault(key, []).append(float(np.mean(bias)))
        for key, val in outcome["fit"].items():
            values.setdefault(key, []).append(float(val))

    stats = {}
    for key, vals in values.items():
        arr = np.asarray(vals, dtype=float)
        ok = arr[~np.isnan(arr)]
        if ok.size == 0:
            continue
        mean = float(ok.mean())
        sd = float(ok.std(ddof=1)) if ok.size > 1 else float("nan")
        b = biases.get(key)
        if b is not None:
            barr = np.asarray(b, dtype=float)
            bok = barr[~np.isnan(barr)]
            bias = float(bok.mean()) if bok.size else float("nan")
        else:
            bias = float("nan")
        stats[key] = CellStat(mean=mean, sd=sd, bias=bias)
    return CellSummary(condition=cond, design=design, stats=stats,
                       n_excluded=excluded,
                       n_replications=len(outcomes),
                       population_size=population_size)


def run_population_cell(cond: ConditionSpec,
                        options: RunOptions = RunOptions()) -> CellSummary:
    """One finite-population draw; no sampling-error corrections."""
    if options.population_size < 10_000:
        raise ValueError("population size must be at least 10,000")
    outcome = _replication(cond, 0, options.population_size, options,
                           population=True)
    return _aggregate(cond, [outcome], "population",
                      population_size=options.population_size)


def _rep_worker(args):
    cond, rep, options = args
    return rep, _replication(cond, rep, cond.n, options, population=False)


def run_sample_cell(cond: ConditionSpec, options: RunOptions = RunOptions(),
                    return_outcomes: bool = False):
    """Replicated sample runs for one cell.

    Replications run in a process pool when ``options.workers`` allows;
    outcomes are reduced in replication order so scheduling cannot
    change the result. Raises if more than a quarter of the
    replications failed for any requested estimator.
    """
    if cond.n is None:
        raise ValueError("sample cells need a sample size n")
    tasks = [(cond, rep, options) for rep in range(cond.replications)]
    workers = options.workers or min(os.cpu_count() or 1, 8)
    outcomes = [None] * cond.replications
    if workers > 1 and cond.replications > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            for rep, outcome in pool.map(_rep_worker, tasks, chunksize=4):
                outcomes[rep] = outcome
    else:
        for task in tasks:
            rep, outcome = _rep_worker(task)
            outcomes[rep] = outcome

    summary = _aggregate(cond, outcomes, "sample")
    for est in cond.estimators:
        denom = cond.replications
        if est == "bayes":
            denom = len(range(0, cond.replications, max(options.bayes_every, 1)))
        bad = summary.n_excluded.get(est, 0)
        if denom and bad / denom > 0.25:
            raise RuntimeError(
                f"cell {cond.cell_key()}: {bad}/{denom} replications excluded "
                f"for estimator {est}")
    if return_outcomes:
        return summary, outcomes
    return summary


def _format_value(v):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    return f"{v:.12g}"


def summary_rows(summary: CellSummary):
    """results.csv rows for one cell, in fixed estimator/coefficient order."""
    cond = summary.condition
    n_field = cond.n if cond.n is not None else summary.population_size
    rows = []
    for est in _ESTIMATOR_ORDER:
        for coef in _COEFFICIENT_ORDER:
            stat = summary.get(est, coef)
            if stat is None:
                continue
            rows.append({
                "q": cond.q, "p_per_factor": cond.p_per_factor,
                "sl": _format_value(cond.sl), "cl": cond.cl,
                "phi": _format_value(cond.phi), "c": cond.c, "n": n_field,
                "estimator": est, "coefficient": coef,
                "mean": _format_value(stat.mean),
                "sd": _format_value(stat.sd),
                "bias": _format_value(stat.bias),
                "n_excluded": summary.n_excluded.get(est, 0),
            })
    return rows


_REPLICATION_COLUMNS = ["q", "p_per_factor", "sl", "cl", "phi", "c", "n",
                        "master_seed", "replication", "method", "coefficient",
                        "per_factor", "mean", "bias"]


def _replication_rows(cond: ConditionSpec, outcomes):
    cell_keys = {"q": cond.q, "p_per_factor": cond.p_per_factor,
                 "sl": _format_value(cond.sl), "cl": cond.cl,
                 "phi": _format_value(cond.phi), "c": cond.c, "n": cond.n,
                 "master_seed": cond.master_seed}
    rows = []
    for rep, outcome in enumerate(outcomes):
        for rec in outcome["records"]:
            for row in rec.csv_rows(cell_keys):
                row["replication"] = rep
                rows.append(row)
    return rows


def run_grid(cells, options: RunOptions = RunOptions(), out_dir=".",
             design: str = None, progress=None):
    """Run a list of cells, writing results.csv and manifest.json.

    ``design`` may force "population" or "sample"; by default each
    cell's ``n`` decides. Returns (summaries, failures).
    """
    os.makedirs(out_dir, exist_ok=True)
    rep_dir = os.path.join(out_dir, "replications")
    if options.keep_replications:
        os.makedirs(rep_dir, exist_ok=True)
    summaries = []
    failures = []
    timings = {}
    for idx, cond in enumerate(cells):
        t0 = time.time()
        cell_design = design or ("population" if cond.n is None else "sample")
        label = "-".join(str(k) for k in cond.cell_key())
        if progress:
            progress(f"[{idx + 1}/{len(cells)}] cell {label} ({cell_design})")
        try:
            if cell_design == "population":
                summary = run_population_cell(cond, options)
            else:
                if options.keep_replications:
                    summary, outcomes = run_sample_cell(cond, options,
                                                        return_outcomes=True)
                    _write_csv(os.path.join(rep_dir, f"cell-{label}.csv"),
                               _REPLICATION_COLUMNS,
                               _replication_rows(cond, outcomes))
                else:
                    summary = run_sample_cell(cond, options)
            summaries.append(summary)
        except Exception as exc:
            failures.append({"cell": label, "error": str(exc)})
        timings[label] = round(time.time() - t0, 3)

    rows = []
    for summary in summaries:
        rows.extend(summary_rows(summary))
    _write_csv(os.path.join(out_dir, "results.csv"), RESULT_COLUMNS, rows)

    manifest = {
        "master_seed": cells[0].master_seed if cells else None,
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "cells": len(cells),
        "failures": failures,
        "options": asdict(options),
        "timings_seconds": timings,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return summaries, failures


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
