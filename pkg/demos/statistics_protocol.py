"""
Comparing methods with paired tests and FDR control
===================================================

Metric values are paired by volume id. The differences go through a
normality check that picks either the paired t-test or the Wilcoxon
signed-rank test, and every family of comparisons is adjusted with
Benjamini-Hochberg before stars are assigned.
"""

import numpy as np

from mrimotion.metrics import MetricRow
from mrimotion.stats import compare_family, icc_absolute_agreement, rescan_reduction

rng = np.random.default_rng(0)
ids = [f"vol{i:03d}" for i in range(40)]
base = rng.uniform(0.45, 0.7, len(ids))


def rows(label, values):
    return [MetricRow(i, label, ssim=float(v)) for i, v in zip(ids, values)]


candidates = {
    "strong": rows("strong", base + 0.08 + rng.normal(0, 0.02, 40)),
    "weak": rows("weak", base + 0.01 + rng.normal(0, 0.04, 40)),
    "same": rows("same", base),
}
for c in compare_family(rows("corrupted", base), candidates, "ssim", "demo", "corrupted"):
    p_adj = "" if c.p_adjusted is None else f"{c.p_adjusted:.2e}"
    print(f"{c.comparison:20s} {c.test:9s} p_adj {p_adj:9s} {c.stars}")

# %%
# Inter-rater agreement uses the single-rater absolute-agreement ICC. Two
# raters that mostly agree on a 5-point scale:

truth = rng.integers(1, 6, 30)
ratings = np.stack([truth, np.clip(truth + rng.integers(-1, 2, 30), 1, 5)], axis=1)
res = icc_absolute_agreement(ratings)
print(f"ICC {res.icc:.3f}, 95% CI {res.ci95[0]:.3f} to {res.ci95[1]:.3f}")

# %%
# Scores below 3 send a volume back for a re-scan.

before = rng.choice([1, 2, 3, 4, 5], size=500, p=[0.25, 0.25, 0.2, 0.2, 0.1])
after = rng.choice([1, 2, 3, 4, 5], size=500, p=[0.1, 0.15, 0.25, 0.3, 0.2])
print(rescan_reduction(before, after))
