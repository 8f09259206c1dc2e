"""Assessment protocol: global losses, per-age and subgroup losses, min-max
scaled importances, and report assembly.

Every loss in a report is recomputable from the persisted predictions table;
the report is derived data, never the source of truth.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DataError

LOW_CONFIDENCE_N = 20

QUALITY_HIGH_THRESHOLD = 100.0   # "more than 100" is strict
QUALITY_LARGE_DELTA = 10.0
VALUE_HIGH_EUR = 10_000_000.0    # "at least 10 M" is inclusive
VALUE_LARGE_DELTA_EUR = 2_500_000.0


def rmse(pred: np.ndarray, actual: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if len(pred) == 0 or len(pred) != len(actual):
        raise DataError("rmse needs equal-length, non-empty inputs")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


def mae(pred: np.ndarray, actual: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if len(pred) == 0 or len(pred) != len(actual):
        raise DataError("mae needs equal-length, non-empty inputs")
    return float(np.mean(np.abs(pred - actual)))


@dataclass(frozen=True)
class SubgroupSpec:
    """Named predicate over (label, current indicator, current quality)."""

    name: str
    predicate: callable

    def mask(self, label, current_indicator, current_quality) -> np.ndarray:
        return np.asarray(self.predicate(label, current_indicator, current_quality), dtype=bool)


def quality_subgroups(high: float = QUALITY_HIGH_THRESHOLD,
                      delta: float = QUALITY_LARGE_DELTA) -> list[SubgroupSpec]:
    return [
        SubgroupSpec("high_quality", lambda y, ind, q: q > high),
        SubgroupSpec("large_decrease", lambda y, ind, q: y <= -delta),
        SubgroupSpec("large_increase", lambda y, ind, q: y >= delta),
    ]


def value_subgroups(high_quality: float = QUALITY_HIGH_THRESHOLD,
                    high_value: float = VALUE_HIGH_EUR,
                    delta: float = VALUE_LARGE_DELTA_EUR) -> list[SubgroupSpec]:
    return [
        SubgroupSpec("high_quality", lambda y, ind, q: q > high_quality),
        SubgroupSpec("high_value", lambda y, ind, q: ind >= high_value),
        SubgroupSpec("large_decrease", lambda y, ind, q: y <= -delta),
        SubgroupSpec("large_increase", lambda y, ind, q: y >= delta),
    ]


def default_subgroups(indicator_kind: str) -> list[SubgroupSpec]:
    return quality_subgroups() if indicator_kind == "quality" else value_subgroups()


def loss_per_age(pred: np.ndarray, actual: np.ndarray, ages: np.ndarray) -> list[dict]:
    """RMSE per integer age; small cells are flagged low-confidence."""
    age_int = np.floor(np.asarray(ages, dtype=float)).astype(int)
    rows = []
    for a in np.unique(age_int):
        m = age_int == a
        rows.append({
            "age": int(a),
            "rmse": rmse(pred[m], actual[m]),
            "n": int(m.sum()),
            "low_confidence": bool(m.sum() < LOW_CONFIDENCE_N),
        })
    return rows


def subgroup_losses(pred, actual, current_indicator, current_quality,
                    specs: list[SubgroupSpec]) -> list[dict]:
    if not specs:
        raise DataError("no subgroup specs given")
    rows = []
    for spec in specs:
        m = spec.mask(actual, current_indicator, current_quality)
        if m.sum() == 0:
            rows.append({"name": spec.name, "rmse": None, "n": 0})
        else:
            rows.append({"name": spec.name, "rmse": rmse(pred[m], actual[m]),
                         "n": int(m.sum())})
    return rows


def scaled_importances(raw: dict[str, float]) -> tuple[dict[str, float], bool]:
    """Min-max scale one model's importances to [0, 1].

    All-equal raw values scale to all zeros and are flagged degenerate.
    """
    values = np.array(list(raw.values()), dtype=float)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return {k: 0.0 for k in raw}, True
    return {k: float((v - lo) / (hi - lo)) for k, v in raw.items()}, False


@dataclass
class PredictionsTable:
    """Long-format predictions: one row per (model, test example)."""

    model: list[str] = field(default_factory=list)
    player_id: list[int] = field(default_factory=list)
    snapshot_date: list[str] = field(default_factory=list)  # ISO dates
    age_years: list[float] = field(default_factory=list)
    current_indicator: list[float] = field(default_factory=list)
    current_quality: list[float] = field(default_factory=list)
    pred: list[float] = field(default_factory=list)
    actual: list[float] = field(default_factory=list)

    COLUMNS = ("model", "player_id", "snapshot_date", "age_years",
               "current_indicator", "current_quality", "pred", "actual")

    def add_model(self, name: str, ds, pred: np.ndarray, current_quality: np.ndarray) -> None:
        dates = ds.snapshot_date.astype("datetime64[D]").astype(str)
        self.model.extend([name] * len(ds))
        self.player_id.extend(int(p) for p in ds.player_id)
        self.snapshot_date.extend(dates)
        self.age_years.extend(float(a) for a in ds.age_years)
        self.current_indicator.extend(float(c) for c in ds.current_indicator)
        self.current_quality.extend(float(q) for q in current_quality)
        self.pred.extend(float(p) for p in pred)
        self.actual.extend(float(y) for y in ds.y)

    def models(self) -> list[str]:
        seen = dict.fromkeys(self.model)
        return list(seen)

    def rows_for(self, name: str) -> np.ndarray:
        return np.array([m == name for m in self.model], dtype=bool)

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.COLUMNS)
            for i in range(len(self.model)):
                w.writerow([
                    self.model[i], self.player_id[i], self.snapshot_date[i],
                    repr(self.age_years[i]), repr(self.current_indicator[i]),
                    repr(self.current_quality[i]), repr(self.pred[i]),
                    repr(self.actual[i]),
                ])

    @classmethod
    def load_csv(cls, path: str | Path) -> "PredictionsTable":
        table = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            r = csv.reader(fh)
            header = tuple(next(r))
            if header != cls.COLUMNS:
                raise DataError(f"unexpected predictions header in {path}")
            for row in r:
                table.model.append(row[0])
                table.player_id.append(int(row[1]))
                table.snapshot_date.append(row[2])
                table.age_years.append(float(row[3]))
                table.current_indicator.append(float(row[4]))
                table.current_quality.append(float(row[5]))
                table.pred.append(float(row[6]))
                table.actual.append(float(row[7]))
        return table


def assemble_report(table: PredictionsTable, indicator_kind: str,
                    importances: dict[str, dict[str, float]] | None = None,
                    uncertainty: dict[str, dict] | None = None) -> dict:
    """Build the full evaluation report from the predictions table.

    Importances (raw, per model) and interval-coverage results are attached
    as-is after min-max scaling; every loss cell is derived from the table.
    """
    specs = default_subgroups(indicator_kind)
    report: dict = {
        "indicator_kind": indicator_kind,
        "models": {},
        "per_age": {},
        "subgroups": {},
        "importances": {},
        "uncertainty": uncertainty or {},
    }
    pred = np.array(table.pred)
    actual = np.array(table.actual)
    ages = np.array(table.age_years)
    cur = np.array(table.current_indicator)
    qual = np.array(table.current_quality)
    for name in table.models():
        m = table.rows_for(name)
        report["models"][name] = {
            "rmse": rmse(pred[m], actual[m]),
            "mae": mae(pred[m], actual[m]),
            "n": int(m.sum()),
        }
        report["per_age"][name] = loss_per_age(pred[m], actual[m], ages[m])
        report["subgroups"][name] = subgroup_losses(pred[m], actual[m], cur[m], qual[m], specs)
    for name, raw in (importances or {}).items():
        scaled, degenerate = scaled_importances(raw)
        report["importances"][name] = {"features": scaled, "degenerate": degenerate}
    return report


def save_report(report: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_plot_tables(report: dict, out_dir: str | Path) -> list[Path]:
    """Plot-ready TSVs: global losses, per-age curves, subgroup bars, and the
    importance heatmap."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def table(name, header, rows):
        path = out / name
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written.append(path)

    table("global_losses.tsv", ["model", "rmse", "mae", "n"],
          [[m, v["rmse"], v["mae"], v["n"]] for m, v in sorted(report["models"].items())])
    table("loss_per_age.tsv", ["model", "age", "rmse", "n", "low_confidence"],
          [[m, r["age"], r["rmse"], r["n"], int(r["low_confidence"])]
           for m, rows in sorted(report["per_age"].items()) for r in rows])
    table("subgroup_losses.tsv", ["model", "subgroup", "rmse", "n"],
          [[m, r["name"], "" if r["rmse"] is None else r["rmse"], r["n"]]
           for m, rows in sorted(report["subgroups"].items()) for r in rows])
    table("importances.tsv", ["model", "feature", "scaled_importance"],
          [[m, f, v] for m, entry in sorted(report["importances"].items())
           for f, v in sorted(entry["features"].items())])
    return written
