"""Rendering result files as publication-style tables and verifying targets."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .targets import ReferenceTarget, load_targets

__all__ = ["render_table", "verify", "VerifyOutcome", "VerifyReport"]

_MISSING = "—"   # em dash placeholder for absent cells


def _fmt2(value, strip=True) -> str:
    """Two decimals, half rounded away from zero, paper-style leading dot."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return _MISSING
    scaled = math.floor(abs(value) * 100 + 0.5) / 100
    text = f"{scaled:.2f}"
    if strip and text.startswith("0."):
        text = text[1:]
    return ("-" if value < 0 else "") + text


def _load_results(results) -> pd.DataFrame:
    if isinstance(results, pd.DataFrame):
        df = results.copy()
    else:
        df = pd.read_csv(results)
    for col in ("sl", "phi", "mean", "sd", "bias"):
        df[col] = pd.to_numeric(df[col], errors="coerce")
    return df


def _select(df, cell, estimator, coefficient):
    m = (df["estimator"] == estimator) & (df["coefficient"] == coefficient)
    for key, val in cell.items():
        if key in ("sl", "phi"):
            m &= np.isclose(df[key], float(val))
        else:
            m &= df[key] == val
    return df[m]


def _cell_text(df, cell, estimator, coefficient, with_sd, with_bias):
    rows = _select(df, cell, estimator, coefficient)
    if rows.empty:
        return _MISSING
    mean = rows["mean"].mean()
    text = _fmt2(mean)
    if with_sd:
        sd = rows["sd"].mean()
        text += f" ({_fmt2(sd)})" if not math.isnan(sd) else ""
    if with_bias:
        bias = rows["bias"].mean()
        if not math.isnan(bias):
            text += f" /{_fmt2(bias)}"
    return text


_POPULATION_ROWS = [
    ("ml", "score_bl", "ML Cor(BL)"),
    ("ml", "p_bl", "ML P_BL /bias"),
    ("wlsmv", "score_bl", "WLSMV Cor(BL)"),
    ("wlsmv", "p_bl", "WLSMV P_BL /bias"),
    ("bayes", "score_bl", "BA Cor(BL)"),
    ("bayes", "p_bl", "BA P_BL /bias"),
    ("wlsmv_ml", "p_blc", "ML/WLSMV P_BLc /bias"),
    ("ml", "score_cp", "ML Cor(CP)"),
    ("ml", "p_cp", "ML P_CP /bias"),
    ("wlsmv", "score_cp", "WLSMV Cor(CP)"),
    ("wlsmv", "p_cp", "WLSMV P_CP /bias"),
    ("bayes", "score_cp", "BA Cor(CP)"),
    ("bayes", "p_cp", "BA P_CP /bias"),
]

_SAMPLE_COLUMNS_ML = [
    ("ml", "score_bl", "Cor(BL)", False),
    ("ml", "p_bl", "P_BL", True),
    ("ml", "p_bl_corrected", "P_BL^c", True),
    ("wlsmv_ml", "p_blc", "P_BLc", True),
    ("wlsmv_ml", "p_blc_corrected", "P_BLc^c", True),
    ("ml", "score_cp", "Cor(CP)", False),
    ("ml", "p_cp", "P_CP", True),
    ("ml", "p_cp_corrected", "P_CP^c", True),
]

_SAMPLE_COLUMNS_BAYES = [
    ("bayes", "score_bl", "Cor(BL)", False),
    ("bayes", "p_bl", "P_BL", True),
    ("bayes", "p_bl_corrected", "P_BL^c", True),
    ("bayes", "score_cp", "Cor(CP)", False),
    ("bayes", "p_cp", "P_CP", True),
    ("bayes", "p_cp_corrected", "P_CP^c", True),
]

_S1_ROWS = [
    ("ml", "chi_square", "ML chi2"),
    ("ml", "rmsea", "ML RMSEA"),
    ("ml", "cfi", "ML CFI"),
    ("ml", "srmr", "ML SRMR"),
    ("bayes", "ppp", "BA PPP"),
    ("bayes", "rmsea", "BA RMSEA (plug-in)"),
    ("bayes", "cfi", "BA CFI (plug-in)"),
]


def _markdown(header, rows):
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for row in rows:
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def _population_layout(df, row_spec, value_fmt=None):
    # the published population tables show the two-category slice
    columns = []
    for sl in (0.4, 0.8):
        for phi in (0.0, 0.3):
            for cl in (0, 1):
                nl = sl / 2 if cl else 0.0
                columns.append(({"sl": sl, "phi": phi, "cl": cl, "c": 2},
                                f"sl={_fmt2(sl)} phi={_fmt2(phi)} nl={_fmt2(nl)}"))
    header = ["row"] + [label for _, label in columns]
    rows = []
    for est, coef, label in row_spec:
        with_bias = not coef.startswith("score") and coef not in (
            "chi_square", "rmsea", "cfi", "srmr", "ppp")
        line = [label]
        for cell, _ in columns:
            if value_fmt is not None:
                line.append(value_fmt(df, cell, est, coef))
            else:
                line.append(_cell_text(df, cell, est, coef,
                                       with_sd=False, with_bias=with_bias))
        rows.append(line)
    return _markdown(header, rows)


def _sample_layout(df, column_spec):
    header = ["sl", "n", "c"] + [label for _, _, label, _ in column_spec]
    rows = []
    for sl in (0.4, 0.8):
        for n in (300, 900):
            for c in (2, 4, 6, 8):
                cell = {"sl": sl, "n": n, "c": c}
                line = [_fmt2(sl), str(n), str(c)]
                for est, coef, _, with_bias in column_spec:
                    line.append(_cell_text(df, cell, est, coef,
                                           with_sd=True, with_bias=with_bias))
                if any(v != _MISSING for v in line[3:]):
                    rows.append(line)
    return _markdown(header, rows)


def render_table(results, layout: str) -> str:
    """Render a results CSV (path or DataFrame) in a published-table layout.

    Layouts: ``table2`` (population determinacies), ``table3``
    (sample ML and combined), ``table4`` (sample Bayes), ``s1``
    (population fit indices). Cells present multiple times (designs
    collapsed into one printed cell) are averaged; absent cells render
    as an em dash.
    """
    df = _load_results(results)
    if layout == "table2":
        return _population_layout(df, _POPULATION_ROWS)
    if layout == "table3":
        return _sample_layout(df, _SAMPLE_COLUMNS_ML)
    if layout == "table4":
        return _sample_layout(df, _SAMPLE_COLUMNS_BAYES)
    if layout in ("s1", "tableS1"):
        def chi_fmt(df_, cell, est, coef):
            if coef == "chi_square":
                rows = _select(df_, cell, est, coef)
                if rows.empty:
                    return _MISSING
                return f"{rows['mean'].mean():.2f}"
            return _cell_text(df_, cell, est, coef, with_sd=False, with_bias=False)
        return _population_layout(df, _S1_ROWS, value_fmt=chi_fmt)
    raise ValueError(f"unknown layout {layout!r}")


@dataclass
class VerifyOutcome:
    target: ReferenceTarget
    observed: float
    passed: bool
    matched_band: str
    delta: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        obs = "missing" if self.observed is None or math.isnan(self.observed) \
            else f"{self.observed:.4f}"
        detail = f"matched '{self.matched_band}' band" if self.passed else \
            f"delta {self.delta:+.4f} vs expected {self.target.bands[0].expected}"
        return f"[{status}] {self.target.describe()}: observed {obs}; {detail}"


@dataclass
class VerifyReport:
    outcomes: list

    @property
    def n_failed(self) -> int:
        return sum(not o.passed for o in self.outcomes)

    def summary(self) -> str:
        n = len(self.outcomes)
        return f"{n - self.n_failed}/{n} targets passed"

    def text(self) -> str:
        return "\n".join([o.line() for o in self.outcomes] + [self.summary()])


def verify(results, targets) -> VerifyReport:
    """Compare a results CSV against reference targets.

    ``targets`` is a table id (see :func:`facdet.targets.load_targets`)
    or an iterable of targets. A missing cell counts as a failure.
    """
    df = _load_results(results)
    if isinstance(targets, str):
        targets = load_targets(targets)
    outcomes = []
    for target in targets:
        rows = _select(df, target.cell, target.estimator, target.coefficient)
        if rows.empty:
            outcomes.append(VerifyOutcome(target=target, observed=float("nan"),
                                          passed=False, matched_band="",
                                          delta=float("nan")))
            continue
        observed = float(rows[target.field].mean())
        matching = [] if math.isnan(observed) else \
            [band.label or "default" for band in target.bands
             if band.contains(observed)]
        matched = "+".join(matching)
        delta = observed - target.bands[0].expected
        outcomes.append(VerifyOutcome(target=target, observed=observed,
                                      passed=bool(matched),
                                      matched_band=matched, delta=delta))
    return VerifyReport(outcomes=outcomes)
