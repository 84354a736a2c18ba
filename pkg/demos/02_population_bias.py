"""Population-level bias of determinacy coefficients under dichotomization.

Runs three finite-population cells (200,000 cases each, median-split
binary indicators): a weak-loading cell, a strong-loading cell, and the
misfit cell with unmodeled cross-loadings plus correlated factors. The
categorical-data estimator (polychorics + DWLS) reports determinacies
for the latent continuous variables its parameters describe - but the
predictor is built from the categorical scores, so its parameter-based
coefficient overshoots the correlation actually achieved. Maximum
likelihood on the raw codes stays close to honest.
"""

import numpy as np

from facdet import ConditionSpec, RunOptions, run_population_cell

options = RunOptions(population_size=200_000, workers=1)

cells = [
    ("weak loadings (sl=.40)", ConditionSpec(q=3, p_per_factor=5, sl=0.4,
                                             cl=0, phi=0.0, c=2,
                                             estimators=("ml", "wlsmv"),
                                             master_seed=2024)),
    ("strong loadings (sl=.80)", ConditionSpec(q=3, p_per_factor=5, sl=0.8,
                                               cl=0, phi=0.0, c=2,
                                               estimators=("ml", "wlsmv"),
                                               master_seed=2024)),
    ("misfit + correlated factors", ConditionSpec(q=3, p_per_factor=5, sl=0.8,
                                                  cl=1, phi=0.3, c=2,
                                                  estimators=("ml", "wlsmv"),
                                                  master_seed=2024)),
]

header = f"{'cell':30s} {'est':8s} {'P_BL':>7s} {'score':>7s} {'bias':>7s}"
print(header)
print("-" * len(header))
for label, cond in cells:
    summary = run_population_cell(cond, options)
    for est in ("ml", "wlsmv"):
        p_bl = summary.get(est, "p_bl")
        score = summary.get(est, "score_bl")
        print(f"{label:30s} {est:8s} {p_bl.mean:7.3f} {score.mean:7.3f} "
              f"{p_bl.bias:+7.3f}")
    blc = summary.get("wlsmv_ml", "p_blc")
    print(f"{label:30s} {'combined':8s} {blc.mean:7.3f} "
          f"{blc.mean - blc.bias:7.3f} {blc.bias:+7.3f}")

print("""
Reading the table: the DWLS-only coefficient overstates the achieved
correlation by ~.10 at weak loadings and by ~.25 in the misfit cell,
while the ML and combined coefficients track the score-based truth.
The combined coefficient prices the categorical predictor under the
structure fitted to the categorical scores themselves, which is what
keeps it honest.""")
