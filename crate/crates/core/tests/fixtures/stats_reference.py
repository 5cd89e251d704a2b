"""Reference p-values for the significance tests, computed with scipy.

    python3 stats_reference.py > stats_reference.json

Datasets of up to 25 pairs have no ties or zero differences so the exact
signed-rank distribution applies; larger ones deliberately include both and
exercise the tie-corrected normal approximation. The method is chosen on the
count of non-zero differences, and large datasets are redrawn until that
count stays above 25.
"""
import json

import numpy as np
import scipy
from scipy import stats

rng = np.random.default_rng(20240611)
cases = []

def draw(n, coarse):
    b = rng.normal(0.5, 0.05, n)
    shift = rng.normal(float(rng.uniform(-0.01, 0.03)), 0.02, n)
    if coarse:
        # a coarse grid creates ties and a few exact zeros
        b = np.round(b, 2)
        return np.round(b + np.round(shift, 2), 2), b
    return b + shift, b


for i in range(20):
    if i < 7:
        a, b = draw([5, 8, 10, 12, 15, 20, 25][i], False)
    else:
        while True:
            a, b = draw(int(rng.integers(30, 60)), True)
            if np.count_nonzero(a - b) > 25:
                break
    t_p = stats.ttest_rel(a, b, alternative="greater").pvalue
    method = "exact" if np.count_nonzero(a - b) <= 25 else "approx"
    w_p = stats.wilcoxon(a, b, alternative="greater", method=method, zero_method="wilcox", correction=True).pvalue
    cases.append({"a": a.tolist(), "b": b.tolist(), "t_p": float(t_p), "wilcoxon_p": float(w_p)})

print(json.dumps({"scipy": scipy.__version__, "cases": cases}, indent=1))
