"""The three uncertainty quantification routes and their empirical coverage.

Run: python3 demos/demo_04_uncertainty.py
"""

import numpy as np

from scoutcast.knn import build_index
from scoutcast.linear import fit_ols
from scoutcast.trees import fit_forest
from scoutcast.uncertainty import (
    empirical_coverage,
    forest_interval,
    forest_jackknife_variance,
    knn_range_interval,
    ols_interval,
)
import sys
sys.path.insert(0, "tests")
from conftest import dataset_from_arrays  # noqa: E402

rng = np.random.default_rng(0)
n = 4000
X = rng.normal(size=(n, 3))
beta = np.array([2.0, -1.0, 0.5])
y = X @ beta + rng.normal(size=n)
ds = dataset_from_arrays(X, y)

print("== OLS: classical t prediction intervals ==")
fit = fit_ols(ds)
x0 = X.mean(axis=0)
for level in (0.5, 0.9, 0.95):
    iv = ols_interval(fit, x0, level)
    print(f"level {level:.2f}: [{iv.lower:+.2f}, {iv.upper:+.2f}] around {iv.point:+.2f}")
X_new = rng.normal(size=(2000, 3))
y_new = X_new @ beta + rng.normal(size=2000)
cov = empirical_coverage([ols_interval(fit, x, 0.95) for x in X_new], y_new)
print(f"empirical coverage of the 95% interval on fresh data: {cov:.3f}")

print("\n== forest: jackknife-after-bootstrap variance ==")
x1 = rng.uniform(-2, 2, size=800)
noise = np.where(x1 < 0, 2.5, 0.4)
yy = x1 + noise * rng.normal(size=800)
forest = fit_forest(dataset_from_arrays(x1.reshape(-1, 1), yy),
                    n_trees=400, min_samples_leaf=10, seed=1)
for probe in (-1.5, 1.5):
    var = forest_jackknife_variance(forest, np.array([probe]))
    iv = forest_interval(forest, np.array([probe]), 0.9)
    print(f"x={probe:+.1f} (true noise sd {2.5 if probe < 0 else 0.4}): "
          f"sigma_hat {np.sqrt(var):.2f}, 90% interval width {iv.width:.2f}")

print("\n== kNN: neighbor-range intervals ==")
index = build_index(X, y)
iv = knn_range_interval(index, X[10], k=15)
print(f"15-neighbor range around {iv.point:+.2f}: [{iv.lower:+.2f}, {iv.upper:+.2f}]")
