"""Expanding-window CV folds and surrogate-based hyperparameter search.

Run: python3 demos/demo_05_tuning_and_cv.py
"""

import numpy as np

from scoutcast.selection import (
    Integer,
    Real,
    expanding_window_splits,
    fold_indices,
    smbo_tune,
)
from scoutcast.features import build_quality_dataset
from scoutcast.simulate import SimConfig, run_simulation
from scoutcast.trees import fit_tree, predict_tree
from scoutcast.core import dataset_split_by_time

bundle = run_simulation(SimConfig(n_players=320, n_clubs=18, n_leagues=3,
                                  seasons=6, seed=12))
quality, _ = build_quality_dataset(bundle)
train, _ = dataset_split_by_time(quality, 2017)

print("== expanding-window folds (each year validates once) ==")
folds = expanding_window_splits(train)
for fold in folds:
    fit_idx, val_idx = fold_indices(train, fold)
    print(f"fit {fold.fit_years} ({len(fit_idx)} rows) -> validate {fold.validate_year} "
          f"({len(val_idx)} rows)")

print("\n== tuning a regression tree with the forest surrogate ==")
space = {"max_depth": Integer(2, 10), "min_samples_leaf": Integer(5, 200)}


def objective(config):
    losses = []
    for fold in folds:
        fit_idx, val_idx = fold_indices(train, fold)
        tree = fit_tree(train.subset(fit_idx), config["max_depth"],
                        config["min_samples_leaf"])
        pred = predict_tree(tree, train.X[val_idx])
        losses.append(np.sqrt(np.mean((pred - train.y[val_idx]) ** 2)))
    return float(np.mean(losses))


trace = smbo_tune(space, objective, budget=14, n_init=5, seed=0)
print(f"{'trial':>5s} {'depth':>5s} {'leaf':>5s} {'cv rmse':>8s} {'best':>8s}")
best = np.inf
for i, (config, loss) in enumerate(trace.entries):
    best = min(best, loss)
    print(f"{i:5d} {config['max_depth']:5d} {config['min_samples_leaf']:5d} "
          f"{loss:8.3f} {best:8.3f}")
print(f"\nwinner: {trace.best_config} at CV RMSE {trace.best_loss:.3f}")
print("(a real run would now refit on the complete training set)")
