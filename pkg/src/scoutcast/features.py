"""Snapshot feature extraction: player histories -> labeled datasets.

Quality snapshots are monthly; value snapshots land on the January/July
transfer windows. Labels are always the indicator twelve months ahead minus
the indicator now. Every feature uses only data at or before the snapshot
date (snapshots sit on day 1, matches never do).
"""

from __future__ import annotations

import numpy as np

from .core import (
    CONTINUOUS,
    DISCRETE,
    Dataset,
    FeatureSchema,
    PlayerHistory,
    month_index,
    month_start,
)
from .simulate import POSITION_PEAK_OFFSETS, HistoryBundle

MIN_GAMES = 20
MIN_SPAN_MONTHS = 24
MAX_IDLE_MONTHS = 12  # snapshots stop once a player has been out this long
TEAM_ACTIVE_WINDOW = 6
DEFAULT_PEAK_AGE = 26.0
CORRELATION_THRESHOLD = 0.95

_Q = [
    ("month_of_year", DISCRETE, "calendar"),
    ("sciskill", CONTINUOUS, "current_performance"),
    ("league_strength", CONTINUOUS, "league_strength"),
    ("previous_zero_months", DISCRETE, "recency"),
    ("age_years", CONTINUOUS, "player_characteristics"),
    ("age_years_squared", CONTINUOUS, "player_characteristics"),
    ("years_diff_peak_age", CONTINUOUS, "player_characteristics"),
    ("position", DISCRETE, "player_characteristics"),
    ("nationality", DISCRETE, "player_characteristics"),
    ("sciskill_diff_1m_ago", CONTINUOUS, "time_series"),
    ("sciskill_diff_3m_ago", CONTINUOUS, "time_series"),
    ("sciskill_diff_6m_ago", CONTINUOUS, "time_series"),
    ("sciskill_diff_12m_ago", CONTINUOUS, "time_series"),
    ("sciskill_diff_mean_team", CONTINUOUS, "team_diff"),
    ("club_transfers_in_12m", DISCRETE, "club_transfers"),
    ("club_transfers_out_12m", DISCRETE, "club_transfers"),
]

_V = [
    ("month_of_year", DISCRETE, "calendar"),
    ("etv", CONTINUOUS, "current_performance"),
    ("sciskill", CONTINUOUS, "current_performance"),
    ("minutes_played_3m", CONTINUOUS, "current_performance"),
    ("league_strength", CONTINUOUS, "league_strength"),
    ("previous_zero_months", DISCRETE, "recency"),
    ("age_years", CONTINUOUS, "player_characteristics"),
    ("age_years_squared", CONTINUOUS, "player_characteristics"),
    ("years_diff_peak_age", CONTINUOUS, "player_characteristics"),
    ("position", DISCRETE, "player_characteristics"),
    ("nationality", DISCRETE, "player_characteristics"),
    ("career_games", DISCRETE, "player_characteristics"),
    ("etv_diff_6m_ago", CONTINUOUS, "time_series"),
    ("etv_diff_12m_ago", CONTINUOUS, "time_series"),
    ("sciskill_diff_6m_ago", CONTINUOUS, "time_series"),
    ("sciskill_diff_mean_team", CONTINUOUS, "team_diff"),
    ("club_transfers_in_12m", DISCRETE, "club_transfers"),
    ("club_transfers_out_12m", DISCRETE, "club_transfers"),
    ("contract_months_left", CONTINUOUS, "contract"),
    ("contract_under_6m", DISCRETE, "contract"),
]

QUALITY_SCHEMA = FeatureSchema(*map(tuple, zip(*_Q)))
VALUE_SCHEMA = FeatureSchema(*map(tuple, zip(*_V)))

KNN_LAGS = (1, 3, 6, 12)


def knn_schema(indicator_kind: str) -> FeatureSchema:
    base = "sciskill" if indicator_kind == "quality" else "etv"
    names = [base] + [f"{base}_{lag}m_ago" for lag in KNN_LAGS] + ["age_years"]
    return FeatureSchema(tuple(names), tuple(CONTINUOUS for _ in names),
                         tuple("time_series" if i < 5 else "player_characteristics"
                               for i in range(len(names))))


def filter_eligibility(histories: dict[int, PlayerHistory]) -> dict[int, PlayerHistory]:
    """Keep players with more than MIN_GAMES appearances spanning more than
    MIN_SPAN_MONTHS months."""
    out = {}
    for pid, h in histories.items():
        if len(h.appearances) <= MIN_GAMES:
            continue
        first, last = h.appearances[0].date, h.appearances[-1].date
        span = (last.year - first.year) * 12 + (last.month - first.month)
        if last.day < first.day:
            span -= 1
        if span > MIN_SPAN_MONTHS:
            out[pid] = h
    return out


def _locf(series_months: np.ndarray, series_values: np.ndarray, t: np.ndarray,
          side: str = "right") -> np.ndarray:
    """Last-observation lookup on month keys.

    side="right" includes points dated in month t (series dated on day 1,
    known at the day-1 snapshot); side="left" excludes them (match-derived
    series whose points fall on later days of the month).
    """
    pos = np.searchsorted(series_months, t, side=side) - 1
    out = np.full(t.shape, np.nan)
    ok = pos >= 0
    out[ok] = series_values[pos[ok]]
    return out


class _Context:
    """Shared lookup tables derived from a bundle (team means, transfers)."""

    def __init__(self, bundle: HistoryBundle):
        self.bundle = bundle
        self.start = bundle.start_month
        self.n_months = bundle.n_months
        self.end = self.start + self.n_months - 1
        self._team_tables()
        self._transfer_tables()

    def _team_tables(self):
        b = self.bundle
        months = np.arange(self.start, self.end + 1)
        n_clubs = max(b.club_tier) + 1
        sums = np.zeros((self.n_months, n_clubs))
        counts = np.zeros((self.n_months, n_clubs))
        for pid in sorted(b.players):
            h = b.players[pid]
            if not h.rating_series:
                continue
            r_m = np.array([month_index(d) for d, _ in h.rating_series])
            r_v = np.array([v for _, v in h.rating_series])
            c_m = np.array([month_index(d) for d, _ in h.club_series])
            c_v = np.array([c for _, c in h.club_series], dtype=np.int64)
            a_m = np.array([month_index(a.date) for a in h.appearances])
            rating = _locf(r_m, r_v, months, side="left")
            club = _locf(c_m, c_v.astype(float), months)
            last_app = _locf(a_m, a_m.astype(float), months, side="left")
            ok = (~np.isnan(rating)) & (~np.isnan(club)) & (~np.isnan(last_app))
            ok &= (months - np.where(np.isnan(last_app), months, last_app)) <= TEAM_ACTIVE_WINDOW
            rows = months[ok] - self.start
            cols = club[ok].astype(np.int64)
            np.add.at(sums, (rows, cols), rating[ok])
            np.add.at(counts, (rows, cols), 1.0)
        with np.errstate(invalid="ignore"):
            self.team_mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    def _transfer_tables(self):
        incoming: dict[int, list[int]] = {}
        outgoing: dict[int, list[int]] = {}
        for pid in sorted(self.bundle.players):
            series = self.bundle.players[pid].club_series
            for (d_prev, c_prev), (d_new, c_new) in zip(series, series[1:]):
                m = month_index(d_new)
                incoming.setdefault(c_new, []).append(m)
                outgoing.setdefault(c_prev, []).append(m)
        self.transfers_in = {c: np.array(sorted(v)) for c, v in incoming.items()}
        self.transfers_out = {c: np.array(sorted(v)) for c, v in outgoing.items()}

    def window_count(self, table: dict[int, np.ndarray], clubs: np.ndarray,
                     t: np.ndarray, window: int = 12) -> np.ndarray:
        out = np.zeros(len(t))
        for i, (c, m) in enumerate(zip(clubs, t)):
            ev = table.get(int(c))
            if ev is None:
                continue
            out[i] = np.searchsorted(ev, m, side="right") - np.searchsorted(ev, m - window, side="right")
        return out


class _PlayerArrays:
    def __init__(self, h: PlayerHistory):
        self.birth_m = month_index(h.profile.birth_date)
        self.nationality = h.profile.nationality
        self.position = h.profile.position
        self.r_m = np.array([month_index(d) for d, _ in h.rating_series])
        self.r_v = np.array([v for _, v in h.rating_series])
        self.v_m = np.array([month_index(d) for d, _ in h.value_series])
        self.v_v = np.array([v for _, v in h.value_series])
        self.c_m = np.array([month_index(d) for d, _ in h.club_series])
        self.c_v = np.array([c for _, c in h.club_series], dtype=float)
        self.s_m = np.array([month_index(d) for d, _ in h.league_strength_series])
        self.s_v = np.array([v for _, v in h.league_strength_series])
        self.e_m = np.array([month_index(d) for d, _ in h.contract_series])
        self.e_v = np.array([month_index(e) for _, e in h.contract_series], dtype=float)
        self.app_m = np.array([month_index(a.date) for a in h.appearances])
        self.app_day_gt1 = np.array([a.date.day > 1 for a in h.appearances])
        self.app_minutes = np.array([a.minutes for a in h.appearances], dtype=float)

    def rating_at(self, t):
        # rating points sit on match days (> day 1): same-month points are
        # not yet known at the day-1 snapshot
        return _locf(self.r_m, self.r_v, t, side="left")

    def value_at(self, t):
        # value points are dated on day 1, exactly the snapshot instant
        return _locf(self.v_m, self.v_v, t)

    def prev_zero_months(self, t):
        # months since the last appearance strictly before the day-1 snapshot
        pos = np.searchsorted(self.app_m, t, side="left") - 1
        ok = pos >= 0
        out = np.full(t.shape, np.nan)
        am = self.app_m[np.clip(pos, 0, None)]
        adj = self.app_day_gt1[np.clip(pos, 0, None)]
        out[ok] = (t - am - adj.astype(int))[ok]
        return out

    def minutes_in_window(self, t, lo_off=3, hi_off=1):
        cum = np.concatenate([[0.0], np.cumsum(self.app_minutes)])
        hi = np.searchsorted(self.app_m, t - hi_off, side="right")
        lo = np.searchsorted(self.app_m, t - lo_off, side="left")
        return cum[hi] - cum[lo]

    def games_before(self, t):
        return np.searchsorted(self.app_m, t, side="left").astype(float)


def _snapshot_months(pa: _PlayerArrays, ctx: _Context, first_ind_month: int,
                     horizon: int, cal_months: tuple[int, ...] | None,
                     lag_pad: int = 0) -> np.ndarray:
    lo = first_ind_month + horizon + lag_pad
    hi = ctx.end - horizon
    if hi < lo:
        return np.array([], dtype=int)
    t = np.arange(lo, hi + 1)
    if cal_months is not None:
        t = t[np.isin(t % 12 + 1, cal_months)]
    if len(t) == 0:
        return t
    pzm = pa.prev_zero_months(t)
    return t[(~np.isnan(pzm)) & (pzm <= MAX_IDLE_MONTHS)]


def _common_columns(pa: _PlayerArrays, ctx: _Context, t: np.ndarray, peak_age: float) -> dict:
    age = (t - pa.birth_m) / 12.0
    club = _locf(pa.c_m, pa.c_v, t)
    rating = pa.rating_at(t)
    mean_team = ctx.team_mean[t - ctx.start, club.astype(np.int64)]
    return {
        "month_of_year": (t % 12 + 1).astype(float),
        "sciskill": rating,
        "minutes_played_3m": pa.minutes_in_window(t),
        "league_strength": _locf(pa.s_m, pa.s_v, t),
        "previous_zero_months": pa.prev_zero_months(t),
        "age_years": age,
        "age_years_squared": age**2,
        "years_diff_peak_age": age - (peak_age + POSITION_PEAK_OFFSETS[pa.position]),
        "position": np.full(len(t), float(pa.position)),
        "nationality": np.full(len(t), float(pa.nationality)),
        "sciskill_diff_mean_team": rating - np.where(np.isnan(mean_team), rating, mean_team),
        "club_transfers_in_12m": ctx.window_count(ctx.transfers_in, club, t),
        "club_transfers_out_12m": ctx.window_count(ctx.transfers_out, club, t),
        "_club": club,
    }


def _assemble(schema: FeatureSchema, rows: list[dict], labels, pids, months, ages, current,
              indicator_kind: str) -> Dataset:
    n = len(labels)
    X = np.empty((n, len(schema)))
    for j, name in enumerate(schema.names):
        X[:, j] = np.concatenate([r[name] for r in rows]) if rows else np.empty(0)
    dates = np.array([month_start(m) for m in months], dtype="datetime64[D]")
    order = np.lexsort((pids, dates))
    return Dataset(
        schema=schema,
        X=X[order],
        y=np.asarray(labels, dtype=float)[order],
        player_id=np.asarray(pids, dtype=np.int64)[order],
        snapshot_date=dates[order],
        age_years=np.asarray(ages, dtype=float)[order],
        current_indicator=np.asarray(current, dtype=float)[order],
        indicator_kind=indicator_kind,
    )


def build_quality_dataset(bundle: HistoryBundle, horizon_months: int = 12,
                          peak_age: float = DEFAULT_PEAK_AGE) -> tuple[Dataset, dict]:
    """Monthly player-quality snapshots labeled with the 12-month rating change."""
    ctx = _Context(bundle)
    eligible = filter_eligibility(bundle.players)
    rows, labels, pids, months, ages, current = [], [], [], [], [], []
    skipped = 0
    for pid in sorted(eligible):
        pa = _PlayerArrays(eligible[pid])
        if len(pa.r_m) == 0:
            skipped += 1
            continue
        t = _snapshot_months(pa, ctx, int(pa.r_m[0]), horizon_months, None, lag_pad=1)
        if len(t) == 0:
            skipped += 1
            continue
        cols = _common_columns(pa, ctx, t, peak_age)
        r_now = cols["sciskill"]
        for lag in (1, 3, 6, 12):
            cols[f"sciskill_diff_{lag}m_ago"] = r_now - pa.rating_at(t - lag)
        rows.append(cols)
        labels.extend(pa.rating_at(t + horizon_months) - r_now)
        pids.extend([pid] * len(t))
        months.extend(t.tolist())
        ages.extend(cols["age_years"])
        current.extend(r_now)
    ds = _assemble(QUALITY_SCHEMA, rows, labels, pids, months, ages, current, "quality")
    report = {
        "players_total": len(bundle.players),
        "players_eligible": len(eligible),
        "players_without_rows": skipped,
        "rows": len(ds),
    }
    return ds, report


# columns the value dataset must always carry, whatever the correlations
PROTECTED_VALUE_FEATURES = frozenset({
    "etv", "sciskill", "etv_diff_6m_ago", "etv_diff_12m_ago", "contract_months_left",
})


def _prune_correlated(X: np.ndarray, schema: FeatureSchema, threshold: float,
                      train_mask: np.ndarray,
                      protected: frozenset = frozenset()) -> tuple[list[int], list[str]]:
    Xt = X[train_mask]
    mean = Xt.mean(axis=0)
    std = Xt.std(axis=0)
    Z = np.where(std > 0, (Xt - mean) / np.where(std > 0, std, 1.0), 0.0)
    corr = Z.T @ Z / max(len(Xt), 1)
    kept: list[int] = []
    dropped: list[str] = []
    for j in range(X.shape[1]):
        if schema.names[j] in protected or all(abs(corr[j, k]) <= threshold for k in kept):
            kept.append(j)
        else:
            dropped.append(schema.names[j])
    return kept, dropped


def build_value_dataset(bundle: HistoryBundle, horizon_months: int = 12,
                        peak_age: float = DEFAULT_PEAK_AGE,
                        correlation_threshold: float = CORRELATION_THRESHOLD,
                        correlation_cutoff_year: int | None = None) -> tuple[Dataset, dict]:
    """Biannual (January/July) transfer-value snapshots with EUR-change labels.

    Highly correlated features are pruned on the training years only, keeping
    the first column in schema order.
    """
    ctx = _Context(bundle)
    eligible = filter_eligibility(bundle.players)
    rows, labels, pids, months, ages, current = [], [], [], [], [], []
    skipped = 0
    for pid in sorted(eligible):
        pa = _PlayerArrays(eligible[pid])
        if len(pa.v_m) == 0:
            skipped += 1
            continue
        t = _snapshot_months(pa, ctx, int(pa.v_m[0]), horizon_months, (1, 7))
        if len(t) == 0:
            skipped += 1
            continue
        cols = _common_columns(pa, ctx, t, peak_age)
        v_now = pa.value_at(t)
        cols["etv"] = v_now
        cols["etv_diff_6m_ago"] = v_now - pa.value_at(t - 6)
        cols["etv_diff_12m_ago"] = v_now - pa.value_at(t - 12)
        cols["sciskill_diff_6m_ago"] = cols["sciskill"] - pa.rating_at(t - 6)
        left = _locf(pa.e_m, pa.e_v, t) - t
        cols["contract_months_left"] = np.maximum(left, 0.0)
        cols["contract_under_6m"] = (np.maximum(left, 0.0) < 6).astype(float)
        cols["career_games"] = pa.games_before(t)
        rows.append(cols)
        labels.extend(pa.value_at(t + horizon_months) - v_now)
        pids.extend([pid] * len(t))
        months.extend(t.tolist())
        ages.extend(cols["age_years"])
        current.extend(v_now)
    ds = _assemble(VALUE_SCHEMA, rows, labels, pids, months, ages, current, "value")
    if len(ds):
        if correlation_cutoff_year is not None:
            train_mask = ds.years() <= correlation_cutoff_year
            if not train_mask.any():
                train_mask = np.ones(len(ds), dtype=bool)
        else:
            train_mask = np.ones(len(ds), dtype=bool)
        kept, dropped = _prune_correlated(ds.X, VALUE_SCHEMA, correlation_threshold,
                                          train_mask, PROTECTED_VALUE_FEATURES)
        ds = ds.select_features([VALUE_SCHEMA.names[k] for k in kept])
    else:
        dropped = []
    report = {
        "players_total": len(bundle.players),
        "players_eligible": len(eligible),
        "players_without_rows": skipped,
        "rows": len(ds),
        "dropped_features": dropped,
    }
    return ds, report


def build_knn_dataset(bundle: HistoryBundle, indicator_kind: str,
                      horizon_months: int = 12) -> tuple[Dataset, dict]:
    """Reduced time-series feature set: the indicator, its lags, and age."""
    ctx = _Context(bundle)
    eligible = filter_eligibility(bundle.players)
    schema = knn_schema(indicator_kind)
    base = schema.names[0]
    cal = None if indicator_kind == "quality" else (1, 7)
    rows, labels, pids, months, ages, current = [], [], [], [], [], []
    for pid in sorted(eligible):
        pa = _PlayerArrays(eligible[pid])
        ind_m = pa.r_m if indicator_kind == "quality" else pa.v_m
        if len(ind_m) == 0:
            continue
        t = _snapshot_months(pa, ctx, int(ind_m[0]), horizon_months, cal,
                             lag_pad=1 if indicator_kind == "quality" else 0)
        if len(t) == 0:
            continue
        at = pa.rating_at if indicator_kind == "quality" else pa.value_at
        now = at(t)
        cols = {base: now, "age_years": (t - pa.birth_m) / 12.0}
        for lag in KNN_LAGS:
            cols[f"{base}_{lag}m_ago"] = at(t - lag)
        rows.append(cols)
        labels.extend(at(t + horizon_months) - now)
        pids.extend([pid] * len(t))
        months.extend(t.tolist())
        ages.extend(cols["age_years"])
        current.extend(now)
    ds = _assemble(schema, rows, labels, pids, months, ages, current, indicator_kind)
    return ds, {"rows": len(ds), "players_eligible": len(eligible)}
