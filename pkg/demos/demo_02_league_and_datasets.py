"""Simulate a small league and turn it into the two labeled datasets.

Run: python3 demos/demo_02_league_and_datasets.py
"""

import numpy as np

from scoutcast.features import build_knn_dataset, build_quality_dataset, build_value_dataset
from scoutcast.simulate import SimConfig, run_simulation

cfg = SimConfig(n_players=400, n_clubs=24, n_leagues=3, seasons=6, seed=42)
bundle = run_simulation(cfg)
print(f"simulated {len(bundle.players)} players, {len(bundle.matches)} matches, "
      f"{cfg.seasons} seasons")

pid = sorted(bundle.players)[50]
h = bundle.players[pid]
print(f"\nplayer {pid}: {len(h.appearances)} appearances, "
      f"{len(h.rating_series)} rating points, {len(h.value_series)} value points")
print("first rating points:", [(d.isoformat(), round(r, 1)) for d, r in h.rating_series[:3]])
print("a value point:", (h.value_series[0][0].isoformat(), f"{h.value_series[0][1]/1e6:.2f}M EUR"))

quality, q_report = build_quality_dataset(bundle)
print(f"\nquality dataset: {len(quality)} monthly snapshots "
      f"({q_report['players_eligible']} eligible players)")
print("features:", ", ".join(quality.schema.names))
print(f"label (12-month rating change): mean {quality.y.mean():+.2f}, sd {quality.y.std():.2f}")

value, v_report = build_value_dataset(bundle, correlation_cutoff_year=2017)
print(f"\nvalue dataset: {len(value)} biannual snapshots; "
      f"pruned correlated columns: {v_report['dropped_features']}")
months = sorted(set(value.feature('month_of_year').astype(int)))
print(f"snapshot months: {months} (January and July only)")

knn_ds, _ = build_knn_dataset(bundle, "quality")
print(f"\nreduced kNN feature set ({len(knn_ds.schema)} dims): {knn_ds.schema.names}")
assert np.array_equal(knn_ds.player_id, quality.player_id)
print("kNN rows align one-to-one with the main dataset")
