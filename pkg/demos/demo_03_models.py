"""Fit all nine regressors on one simulated quality dataset and compare.

Run: python3 demos/demo_03_models.py   (about a minute)
"""

import numpy as np

from scoutcast.core import dataset_split_by_time
from scoutcast.evaluation import rmse
from scoutcast.experiment import ModelSpec, default_models, train_model
from scoutcast.features import build_knn_dataset, build_quality_dataset
from scoutcast.simulate import SimConfig, run_simulation

cfg = SimConfig(n_players=480, n_clubs=24, n_leagues=3, seasons=7, seed=3)
bundle = run_simulation(cfg)
quality, _ = build_quality_dataset(bundle)
knn_ds, _ = build_knn_dataset(bundle, "quality")
train, test = dataset_split_by_time(quality, 2017)
knn_train, knn_test = dataset_split_by_time(knn_ds, 2017)
print(f"train {len(train)} rows (<=2017), test {len(test)} rows")

print(f"\n{'model':16s} {'test RMSE':>9s} {'test MAE':>9s}  features")
for spec in default_models("quality"):
    model = train_model(spec, train, knn_train, "quality", seed=1)
    pred = model.predict(test, knn_test)
    mae = float(np.mean(np.abs(pred - test.y)))
    print(f"{spec.name:16s} {rmse(pred, test.y):9.3f} {mae:9.3f}  {len(model.feature_names)}")

print("\nfeature selection at work:")
ols = train_model(ModelSpec("ols", "ols"), train, knn_train, "quality", seed=1)
print(f"  ols backward selection kept {len(ols.feature_names)}: {ols.feature_names}")
gbt = train_model(ModelSpec("gbt", "gbt", {"rounds": 30}), train, knn_train, "quality", seed=1)
print(f"  gbt noise-variable selection kept {len(gbt.feature_names)}: {gbt.feature_names}")
imp = gbt.raw_importances()
top = sorted(imp, key=imp.get, reverse=True)[:5]
print(f"  gbt top importances: {top}")
