"""End-to-end run at reduced scale: simulate -> train -> evaluate -> report.

Equivalent to:
    scoutcast simulate --config cfg.json
    scoutcast train    --config cfg.json
    scoutcast evaluate --config cfg.json

Run: python3 demos/demo_06_full_pipeline.py   (about two minutes)
"""

import json
import tempfile
from pathlib import Path

from scoutcast.experiment import cmd_evaluate, cmd_simulate, cmd_train, config_from_dict

out = Path(tempfile.mkdtemp(prefix="scoutcast_demo_"))
cfg = config_from_dict({
    "seed": 5,
    "indicator": "quality",
    "cutoff_year": 2017,
    "output_dir": str(out),
    "sim": {"n_players": 480, "n_clubs": 24, "n_leagues": 3, "seasons": 7},
})

print(f"running in {out}")
data_dir = cmd_simulate(cfg)
print(f"datasets written to {data_dir}")
model_dir = cmd_train(cfg)
print(f"model artifacts in {model_dir}")
report_dir = cmd_evaluate(cfg)
report = json.loads((report_dir / "report.json").read_text())

print("\n== global losses ==")
for name, row in sorted(report["models"].items(), key=lambda kv: kv[1]["rmse"]):
    print(f"{name:16s} rmse {row['rmse']:6.3f}  mae {row['mae']:6.3f}  (n={row['n']})")

print("\n== subgroup losses (gbt) ==")
for row in report["subgroups"]["gbt"]:
    loss = "n/a" if row["rmse"] is None else f"{row['rmse']:.3f}"
    print(f"{row['name']:16s} rmse {loss}  (n={row['n']})")

print("\n== interval coverage ==")
for method, entry in report["uncertainty"].items():
    if "coverage" in entry:
        print(f"{method:18s} nominal {entry['nominal_level']:.2f} -> "
              f"empirical {entry['coverage']:.3f} (n={entry['n']})")

print("\n== gbt scaled importances (top 6) ==")
scaled = report["importances"]["gbt"]["features"]
for name in sorted(scaled, key=scaled.get, reverse=True)[:6]:
    print(f"{name:24s} {scaled[name]:.3f}")

print(f"\nplot-ready tables: {[p.name for p in sorted(report_dir.glob('*.tsv'))]}")
