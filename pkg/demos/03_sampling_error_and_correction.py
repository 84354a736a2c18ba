"""Sampling error, category counts, and the determinacy correction.

At n=300 the parameter-based coefficient inherits overfitting noise on
top of any categorization effect. This demo runs one sample cell per
category count (50 replications keeps it quick; the acceptance suite
uses 200) and shows two levers at work: more categories shrink the
bias, and the sampling-error correction removes most of what remains.
"""

from facdet import ConditionSpec, RunOptions, run_sample_cell

options = RunOptions(workers=2)

print(f"{'c':>2s} {'score':>7s} {'P_BL':>7s} {'bias':>7s} "
      f"{'P_BL^c':>7s} {'bias^c':>7s}")
for c in (2, 4, 8):
    cond = ConditionSpec(q=3, p_per_factor=5, sl=0.4, cl=0, phi=0.0, c=c,
                         n=300, replications=50, estimators=("ml",),
                         master_seed=2024)
    summary = run_sample_cell(cond, options)
    score = summary.get("ml", "score_bl").mean
    p_bl = summary.get("ml", "p_bl")
    corr = summary.get("ml", "p_bl_corrected")
    print(f"{c:2d} {score:7.3f} {p_bl.mean:7.3f} {p_bl.bias:+7.3f} "
          f"{corr.mean:7.3f} {corr.bias:+7.3f}")

print("""
Two categories lose real information (the score-based value drops) and
inflate the parameter-based coefficient; eight categories nearly match
continuous behavior. The corrected column subtracts the expected
sampling-error term from the squared coefficient - at c=8 the corrected
bias sits at the resolution of the table.""")
