"""Shared domain types, the dataset container, and time-aware splits."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

CONTINUOUS = "continuous"
DISCRETE = "discrete"

META_COLUMNS = ("label", "player_id", "snapshot_date", "age_years", "current_indicator")


class DataError(ValueError):
    """Raised when input data violates a contract (maps to CLI exit code 3)."""


def month_index(d: date) -> int:
    """Months since year 0, so lag arithmetic is exact calendar-month math."""
    return d.year * 12 + (d.month - 1)


def month_start(idx: int) -> date:
    return date(idx // 12, idx % 12 + 1, 1)


def months_between(earlier: date, later: date) -> int:
    """Floor of the number of whole calendar months from ``earlier`` to ``later``."""
    m = (later.year - earlier.year) * 12 + (later.month - earlier.month)
    if later.day < earlier.day:
        m -= 1
    return m


def age_at(birth_date: date, on: date) -> float:
    """Age in fractional years at calendar-month resolution."""
    return months_between(birth_date, on) / 12.0


@dataclass(frozen=True)
class PlayerProfile:
    player_id: int
    birth_date: date
    nationality: int
    position: int  # 0=GK, 1=DEF, 2=MID, 3=ATT


@dataclass(frozen=True)
class MatchAppearance:
    match_id: int
    date: date
    club_id: int
    opponent_id: int
    minutes: int
    team_goals: int
    opponent_goals: int

    def __post_init__(self):
        if not 0 <= self.minutes <= 120:
            raise DataError(f"minutes out of range: {self.minutes}")
        if self.team_goals < 0 or self.opponent_goals < 0:
            raise DataError("goals must be non-negative")


@dataclass
class PlayerHistory:
    """A player's full timeline: appearances plus time-stamped state series.

    All series are lists of (date, value) pairs with strictly increasing dates.
    ``club_series`` holds changepoints (career start plus each transfer);
    ``contract_series`` maps each contract start to its end date.
    """

    profile: PlayerProfile
    appearances: list[MatchAppearance] = field(default_factory=list)
    rating_series: list[tuple[date, float]] = field(default_factory=list)
    value_series: list[tuple[date, float]] = field(default_factory=list)
    club_series: list[tuple[date, int]] = field(default_factory=list)
    contract_series: list[tuple[date, date]] = field(default_factory=list)
    league_strength_series: list[tuple[date, float]] = field(default_factory=list)

    def first_appearance(self) -> date | None:
        return self.appearances[0].date if self.appearances else None

    def last_appearance(self) -> date | None:
        return self.appearances[-1].date if self.appearances else None


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature columns: names, kinds, and (optionally) families."""

    names: tuple[str, ...]
    kinds: tuple[str, ...]
    families: tuple[str, ...] = ()

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise DataError("feature names must be unique")
        if len(self.kinds) != len(self.names):
            raise DataError("kinds length must match names")
        if self.families and len(self.families) != len(self.names):
            raise DataError("families length must match names")
        bad = set(self.kinds) - {CONTINUOUS, DISCRETE}
        if bad:
            raise DataError(f"unknown feature kinds: {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown feature: {name!r}") from None

    def kind_of(self, name: str) -> str:
        return self.kinds[self.index(name)]

    def subset(self, names: list[str] | tuple[str, ...]) -> "FeatureSchema":
        idx = [self.index(n) for n in names]
        fams = tuple(self.families[i] for i in idx) if self.families else ()
        return FeatureSchema(tuple(names), tuple(self.kinds[i] for i in idx), fams)

    def to_dict(self) -> dict:
        cols = []
        for i, name in enumerate(self.names):
            col = {"name": name, "kind": self.kinds[i]}
            if self.families:
                col["family"] = self.families[i]
            cols.append(col)
        return {"columns": cols}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        cols = d["columns"]
        names = tuple(c["name"] for c in cols)
        kinds = tuple(c["kind"] for c in cols)
        fams = tuple(c.get("family", "") for c in cols)
        if not any(fams):
            fams = ()
        return cls(names, kinds, fams)


@dataclass(frozen=True)
class LabeledExample:
    features: np.ndarray
    label: float
    player_id: int
    snapshot_date: date
    age_years: float
    current_indicator: float


@dataclass(frozen=True)
class Dataset:
    """Immutable labeled dataset; rows are player-snapshot examples.

    Arrays are locked after construction so instances are safe to share.
    """

    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    player_id: np.ndarray
    snapshot_date: np.ndarray  # datetime64[D]
    age_years: np.ndarray
    current_indicator: np.ndarray
    indicator_kind: str  # "quality" | "value"

    def __post_init__(self):
        n = self.X.shape[0]
        if self.X.ndim != 2 or self.X.shape[1] != len(self.schema):
            raise DataError("feature matrix does not conform to schema")
        for name in ("y", "player_id", "snapshot_date", "age_years", "current_indicator"):
            arr = getattr(self, name)
            if arr.shape != (n,):
                raise DataError(f"column {name} has wrong length")
        if self.indicator_kind not in ("quality", "value"):
            raise DataError(f"bad indicator_kind: {self.indicator_kind!r}")
        if n and (np.isnan(self.X).any() or np.isnan(self.y).any()):
            raise DataError("missing values are not allowed in a Dataset")
        for name in ("X", "y", "player_id", "snapshot_date", "age_years", "current_indicator"):
            getattr(self, name).setflags(write=False)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return len(self.schema)

    def years(self) -> np.ndarray:
        return self.snapshot_date.astype("datetime64[Y]").astype(int) + 1970

    def example(self, i: int) -> LabeledExample:
        d = self.snapshot_date[i].astype("datetime64[D]").astype(object)
        return LabeledExample(
            features=self.X[i].copy(),
            label=float(self.y[i]),
            player_id=int(self.player_id[i]),
            snapshot_date=d,
            age_years=float(self.age_years[i]),
            current_indicator=float(self.current_indicator[i]),
        )

    def iter_examples(self):
        for i in range(len(self)):
            yield self.example(i)

    def subset(self, rows) -> "Dataset":
        return Dataset(
            schema=self.schema,
            X=self.X[rows].copy(),
            y=self.y[rows].copy(),
            player_id=self.player_id[rows].copy(),
            snapshot_date=self.snapshot_date[rows].copy(),
            age_years=self.age_years[rows].copy(),
            current_indicator=self.current_indicator[rows].copy(),
            indicator_kind=self.indicator_kind,
        )

    def select_features(self, names) -> "Dataset":
        idx = [self.schema.index(n) for n in names]
        return Dataset(
            schema=self.schema.subset(list(names)),
            X=self.X[:, idx].copy(),
            y=self.y.copy(),
            player_id=self.player_id.copy(),
            snapshot_date=self.snapshot_date.copy(),
            age_years=self.age_years.copy(),
            current_indicator=self.current_indicator.copy(),
            indicator_kind=self.indicator_kind,
        )

    def feature(self, name: str) -> np.ndarray:
        return self.X[:, self.schema.index(name)]


def _fmt(x: float) -> str:
    # repr round-trips doubles exactly, which the CSV contract relies on
    return repr(float(x))


def save_dataset_csv(d: Dataset, path: str | Path, schema_path: str | Path | None = None) -> None:
    """Write the CSV interchange form plus a schema.json sidecar.

    Header is the schema names followed by
    ``label,player_id,snapshot_date,age_years,current_indicator``.
    """
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(d.schema.names) + list(META_COLUMNS))
        dates = d.snapshot_date.astype("datetime64[D]").astype(str)
        for i in range(len(d)):
            row = [_fmt(v) for v in d.X[i]]
            row += [_fmt(d.y[i]), str(int(d.player_id[i])), dates[i],
                    _fmt(d.age_years[i]), _fmt(d.current_indicator[i])]
            w.writerow(row)
    if schema_path is None:
        schema_path = path.with_suffix(".schema.json")
    payload = d.schema.to_dict()
    payload["indicator_kind"] = d.indicator_kind
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset_csv(path: str | Path, schema_path: str | Path | None = None,
                     indicator_kind: str | None = None) -> Dataset:
    """Read a dataset CSV; uses the schema.json sidecar when present."""
    path = Path(path)
    if schema_path is None:
        schema_path = path.with_suffix(".schema.json")
    schema = None
    if Path(schema_path).exists():
        with open(schema_path, encoding="utf-8") as fh:
            payload = json.load(fh)
        schema = FeatureSchema.from_dict(payload)
        indicator_kind = indicator_kind or payload.get("indicator_kind")
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header[-5:]) != META_COLUMNS:
            raise DataError(f"unexpected CSV trailer columns in {path}")
        names = header[:-5]
        rows = list(r)
    if schema is None:
        schema = FeatureSchema(tuple(names), tuple(CONTINUOUS for _ in names))
    elif list(schema.names) != names:
        raise DataError("schema.json does not match CSV header")
    p = len(names)
    n = len(rows)
    X = np.empty((n, p))
    y = np.empty(n)
    pid = np.empty(n, dtype=np.int64)
    dates = np.empty(n, dtype="datetime64[D]")
    ages = np.empty(n)
    cur = np.empty(n)
    for i, row in enumerate(rows):
        X[i] = [float(v) for v in row[:p]]
        y[i] = float(row[p])
        pid[i] = int(row[p + 1])
        dates[i] = np.datetime64(row[p + 2], "D")
        ages[i] = float(row[p + 3])
        cur[i] = float(row[p + 4])
    return Dataset(schema, X, y, pid, dates, ages, cur, indicator_kind or "quality")


def dataset_split_by_time(d: Dataset, cutoff_year: int) -> tuple[Dataset, Dataset]:
    """Split by snapshot year: train gets years <= cutoff, test the rest."""
    years = d.years()
    train_mask = years <= cutoff_year
    if not train_mask.any():
        raise DataError(f"time split at {cutoff_year}: train side is empty")
    if train_mask.all():
        raise DataError(f"time split at {cutoff_year}: test side is empty")
    return d.subset(train_mask), d.subset(~train_mask)


def holdout_players(d: Dataset, fraction: float, seed: int,
                    age_band_years: int = 3, n_quantiles: int = 5) -> tuple[Dataset, Dataset]:
    """Player-level stratified holdout (age band x indicator quantile).

    Every row of a held-out player moves together. Strata are computed from
    each player's earliest-snapshot age and mean current indicator.
    """
    if not 0.0 < fraction < 1.0:
        raise DataError(f"holdout fraction must be in (0, 1), got {fraction}")
    order = np.argsort(d.snapshot_date, kind="stable")
    pids = d.player_id[order]
    unique_ids, first_pos = np.unique(pids, return_index=True)
    first_age = d.age_years[order][first_pos]
    mean_ind = np.zeros(len(unique_ids))
    sums = {}
    counts = {}
    for pid, ind in zip(d.player_id, d.current_indicator):
        sums[pid] = sums.get(pid, 0.0) + ind
        counts[pid] = counts.get(pid, 0) + 1
    for i, pid in enumerate(unique_ids):
        mean_ind[i] = sums[pid] / counts[pid]

    bands = np.floor(first_age / age_band_years).astype(int)
    qs = np.quantile(mean_ind, np.linspace(0, 1, n_quantiles + 1)[1:-1])
    quints = np.searchsorted(qs, mean_ind, side="right")

    rng = np.random.default_rng(seed)
    held: set[int] = set()
    strata = sorted(set(zip(bands.tolist(), quints.tolist())))
    for stratum in strata:
        mask = (bands == stratum[0]) & (quints == stratum[1])
        members = unique_ids[mask]
        k = int(np.floor(len(members) * fraction + 0.5))
        if k == 0:
            continue
        take = rng.permutation(len(members))[:k]
        held.update(int(members[t]) for t in take)

    holdout_mask = np.isin(d.player_id, np.array(sorted(held), dtype=np.int64))
    if holdout_mask.all() or not holdout_mask.any():
        raise DataError("holdout selection left one side empty; adjust fraction")
    return d.subset(~holdout_mask), d.subset(holdout_mask)
