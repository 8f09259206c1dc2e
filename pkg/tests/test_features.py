from datetime import date

import numpy as np
import pytest

from scoutcast.core import (
    MatchAppearance,
    PlayerHistory,
    PlayerProfile,
    month_index,
    month_start,
)
from scoutcast.features import (
    KNN_LAGS,
    QUALITY_SCHEMA,
    VALUE_SCHEMA,
    _prune_correlated,
    build_knn_dataset,
    build_quality_dataset,
    build_value_dataset,
    filter_eligibility,
    knn_schema,
)
from scoutcast.simulate import HistoryBundle, SimConfig, run_simulation

FAMILIES_QUALITY = {"calendar", "current_performance", "league_strength", "recency",
                    "player_characteristics", "time_series", "team_diff", "club_transfers"}
FAMILIES_VALUE = FAMILIES_QUALITY | {"contract"}


def make_history(pid=0, start=date(2014, 1, 1), n_months=60, rating_fn=lambda m: 80.0,
                 value_fn=lambda m: 1_000_000.0, games_per_month=1, club=0,
                 skip_months=()):
    """Hand-built player history: one appearance per month on day 5."""
    profile = PlayerProfile(pid, date(1994, 1, 1), nationality=3, position=2)
    h = PlayerHistory(profile=profile)
    m0 = month_index(start)
    h.club_series = [(start, club)]
    h.league_strength_series = [(start, 1.0)]
    h.contract_series = [(start, date(2030, 1, 1))]
    mid = 0
    for k in range(n_months):
        if k in skip_months:
            continue
        d = month_start(m0 + k)
        d = date(d.year, d.month, 5)
        for _ in range(games_per_month):
            h.appearances.append(MatchAppearance(mid + pid * 100000, d, club, club + 1, 90, 1, 1))
            mid += 1
        h.rating_series.append((d, float(rating_fn(k))))
    for k in range(n_months):
        h.value_series.append((month_start(m0 + k), float(value_fn(k))))
    return h


def make_bundle(histories, start=date(2014, 1, 1), n_months=60):
    return HistoryBundle(
        players={h.profile.player_id: h for h in histories},
        club_tier={0: 0, 1: 0},
        league_strength={0: 1.0},
        matches=[],
        config=None,
        start_month=month_index(start),
        n_months=n_months,
    )


class TestEligibility:
    def _hist(self, games, span_months):
        per_month = max(1, int(np.ceil(games / max(span_months - 1, 1))))
        h = make_history(n_months=span_months, games_per_month=1)
        h.appearances = h.appearances[:1]
        d0 = date(2014, 1, 5)
        h.appearances = []
        for g in range(games):
            frac = g / max(games - 1, 1)
            k = int(round(frac * (span_months - 1)))
            d = month_start(month_index(d0) + k)
            h.appearances.append(MatchAppearance(g, date(d.year, d.month, 5), 0, 1, 90, 0, 0))
        return h

    def test_exactly_20_games_excluded(self):
        out = filter_eligibility({0: self._hist(20, 30)})
        assert out == {}

    def test_21_games_25_months_included(self):
        out = filter_eligibility({0: self._hist(21, 26)})
        assert 0 in out

    def test_many_games_short_span_excluded(self):
        out = filter_eligibility({0: self._hist(300, 23)})
        assert out == {}


class TestQualityDataset:
    def test_constant_rating_zero_labels(self):
        bundle = make_bundle([make_history()])
        ds, report = build_quality_dataset(bundle)
        assert len(ds) > 0
        assert np.all(ds.y == 0.0)
        assert report["players_eligible"] == 1

    def test_label_is_twelve_month_difference(self):
        # rating 80 before 2019-03, then 95: snapshot 2019-03-01 gets label +15
        start = date(2017, 1, 1)
        jump = month_index(date(2019, 3, 1)) - month_index(start)

        def rating(k):
            return 95.0 if k >= jump else 80.0

        bundle = make_bundle([make_history(start=start, n_months=52, rating_fn=rating)],
                             start=start, n_months=52)
        ds, _ = build_quality_dataset(bundle)
        at = ds.snapshot_date == np.datetime64("2019-03-01")
        assert at.sum() == 1
        assert ds.y[at][0] == pytest.approx(15.0)
        assert ds.current_indicator[at][0] == pytest.approx(80.0)

    def test_eleven_months_of_data_no_examples(self):
        bundle = make_bundle([make_history(n_months=11)], n_months=11)
        ds, report = build_quality_dataset(bundle)
        assert len(ds) == 0

    def test_schema_families_covered(self):
        fams = set(QUALITY_SCHEMA.families)
        assert FAMILIES_QUALITY <= fams

    def test_month_of_year_range(self):
        bundle = make_bundle([make_history()])
        ds, _ = build_quality_dataset(bundle)
        months = set(ds.feature("month_of_year").astype(int).tolist())
        assert months <= set(range(1, 13))
        assert len(months) > 6

    def test_label_identity_against_series(self):
        rng = np.random.default_rng(0)
        walk = np.cumsum(rng.normal(0, 2, size=60)) + 80

        def rating(k):
            return walk[k]

        h = make_history(rating_fn=rating)
        bundle = make_bundle([h])
        ds, _ = build_quality_dataset(bundle)
        r_dates = np.array([month_index(d) for d, _ in h.rating_series])
        r_vals = np.array([v for _, v in h.rating_series])
        for i in range(len(ds)):
            t = month_index(ds.example(i).snapshot_date)
            # ratings published at a day-1 snapshot come from earlier months
            r_now = r_vals[np.searchsorted(r_dates, t, side="left") - 1]
            r_fut = r_vals[np.searchsorted(r_dates, t + 12, side="left") - 1]
            assert ds.y[i] == r_fut - r_now  # exact float reproduction
            assert ds.current_indicator[i] == r_now

    def test_previous_zero_months_counts_gap(self):
        h = make_history(skip_months=range(20, 26))
        bundle = make_bundle([h])
        ds, _ = build_quality_dataset(bundle)
        gap_date = np.datetime64(month_start(month_index(date(2014, 1, 1)) + 24))
        row = ds.snapshot_date == gap_date
        assert row.sum() == 1
        # last game was month 19 on day 5; snapshot month 24 day 1 -> 4 whole months
        assert ds.feature("previous_zero_months")[row][0] == 4.0


class TestValueDataset:
    def test_flat_value_zero_labels(self):
        bundle = make_bundle([make_history()])
        ds, _ = build_value_dataset(bundle)
        assert len(ds) > 0
        assert np.all(ds.y == 0.0)

    def test_label_subtraction(self):
        start = date(2017, 1, 1)
        jump = month_index(date(2019, 8, 1)) - month_index(start)

        def value(k):
            return 6_500_000.0 if k >= jump else 4_000_000.0

        bundle = make_bundle([make_history(start=start, n_months=52, value_fn=value)],
                             start=start, n_months=52)
        ds, _ = build_value_dataset(bundle)
        at = ds.snapshot_date == np.datetime64("2019-07-01")
        assert at.sum() == 1
        assert ds.y[at][0] == pytest.approx(2_500_000.0)

    def test_only_january_and_july(self):
        bundle = make_bundle([make_history()])
        ds, _ = build_value_dataset(bundle)
        months = set(ds.feature("month_of_year").astype(int).tolist())
        assert months <= {1, 7}

    def test_contract_features(self):
        h = make_history()
        h.contract_series = [(date(2014, 1, 1), date(2016, 4, 1))]
        bundle = make_bundle([h])
        ds, _ = build_value_dataset(bundle)
        jan16 = ds.snapshot_date == np.datetime64("2016-01-01")
        if "contract_months_left" in ds.schema.names:
            assert ds.feature("contract_months_left")[jan16][0] == 3.0
            assert ds.feature("contract_under_6m")[jan16][0] == 1.0

    def test_families_covered(self):
        assert FAMILIES_VALUE <= set(VALUE_SCHEMA.families)

    def test_protected_columns_survive_pruning(self):
        bundle = make_bundle([make_history(pid=i, rating_fn=lambda k, i=i: 80 + i + 0.3 * k,
                                           value_fn=lambda k, i=i: 1e6 * (1 + i) + 1000 * k)
                              for i in range(6)])
        ds, _ = build_value_dataset(bundle)
        for name in ("etv", "sciskill", "etv_diff_6m_ago", "etv_diff_12m_ago",
                     "contract_months_left"):
            assert name in ds.schema.names


class TestCorrelationPruning:
    def test_keep_first_deterministic(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=400)
        X = np.stack([x, x * 2 + 1e-6 * rng.normal(size=400), rng.normal(size=400)], axis=1)
        from scoutcast.core import CONTINUOUS, FeatureSchema

        schema = FeatureSchema(("a", "b", "c"), (CONTINUOUS,) * 3)
        kept, dropped = _prune_correlated(X, schema, 0.95, np.ones(400, dtype=bool))
        assert kept == [0, 2]
        assert dropped == ["b"]

    def test_constant_column_kept(self):
        rng = np.random.default_rng(2)
        X = np.stack([rng.normal(size=100), np.full(100, 3.0)], axis=1)
        from scoutcast.core import CONTINUOUS, FeatureSchema

        schema = FeatureSchema(("a", "const"), (CONTINUOUS,) * 2)
        kept, dropped = _prune_correlated(X, schema, 0.95, np.ones(100, dtype=bool))
        assert kept == [0, 1]


class TestKnnDataset:
    def test_schema_small_dimension(self):
        for kind in ("quality", "value"):
            schema = knn_schema(kind)
            assert len(schema) <= 8
            assert "age_years" in schema.names

    def test_lag_columns_reconstruct_series(self):
        ramp = lambda k: 50.0 + k  # rating rises one point per month
        bundle = make_bundle([make_history(rating_fn=ramp)])
        ds, _ = build_knn_dataset(bundle, "quality")
        now = ds.feature("sciskill")
        for lag in KNN_LAGS:
            # monthly appearances on day 5: LOCF at day 1 sees month m-1's point
            assert np.allclose(now - ds.feature(f"sciskill_{lag}m_ago"), lag)

    def test_rows_align_with_main_dataset(self):
        cfg = SimConfig(n_players=200, n_clubs=12, n_leagues=2, seasons=3, seed=7)
        bundle = run_simulation(cfg)
        main, _ = build_quality_dataset(bundle)
        knn, _ = build_knn_dataset(bundle, "quality")
        assert np.array_equal(main.player_id, knn.player_id)
        assert np.array_equal(main.snapshot_date, knn.snapshot_date)
        assert np.array_equal(main.y, knn.y)
        mainv, _ = build_value_dataset(bundle)
        knnv, _ = build_knn_dataset(bundle, "value")
        assert np.array_equal(mainv.player_id, knnv.player_id)
        assert np.array_equal(mainv.y, knnv.y)


class TestNoFutureLeakage:
    def test_truncated_bundle_reproduces_features(self):
        cfg = SimConfig(n_players=200, n_clubs=12, n_leagues=2, seasons=4, seed=8)
        bundle = run_simulation(cfg)
        full, _ = build_quality_dataset(bundle)

        cut = month_index(date(2016, 1, 1))

        def truncate(h):
            out = PlayerHistory(profile=h.profile)
            out.appearances = [a for a in h.appearances if month_index(a.date) < cut]
            out.rating_series = [(d, v) for d, v in h.rating_series if month_index(d) < cut]
            out.value_series = [(d, v) for d, v in h.value_series if month_index(d) < cut]
            out.club_series = [(d, v) for d, v in h.club_series if month_index(d) < cut]
            out.contract_series = [(d, v) for d, v in h.contract_series if month_index(d) < cut]
            out.league_strength_series = [(d, v) for d, v in h.league_strength_series
                                          if month_index(d) < cut]
            return out

        truncated = HistoryBundle(
            players={pid: truncate(h) for pid, h in bundle.players.items()},
            club_tier=bundle.club_tier,
            league_strength=bundle.league_strength,
            matches=[],
            config=bundle.config,
            start_month=bundle.start_month,
            n_months=cut - bundle.start_month,
        )
        part, _ = build_quality_dataset(truncated)
        assert len(part) > 0
        key_full = {(int(p), str(d)): i for i, (p, d) in
                    enumerate(zip(full.player_id, full.snapshot_date.astype(str)))}
        matched = 0
        for i, (p, d) in enumerate(zip(part.player_id, part.snapshot_date.astype(str))):
            j = key_full.get((int(p), d))
            if j is None:
                continue  # eligibility can differ on the shorter history
            matched += 1
            assert np.array_equal(part.X[i], full.X[j]), (p, d)
        assert matched > 100


class TestBuildOnSimulation:
    def test_reports_and_sizes(self):
        cfg = SimConfig(n_players=200, n_clubs=12, n_leagues=2, seasons=3, seed=9)
        bundle = run_simulation(cfg)
        q, rq = build_quality_dataset(bundle)
        v, rv = build_value_dataset(bundle, correlation_cutoff_year=2014)
        assert rq["players_eligible"] <= rq["players_total"]
        assert len(q) == rq["rows"]
        assert len(v) == rv["rows"]
        assert np.all(v.current_indicator > 0)
        # age invariant from the profile contract
        assert q.age_years.min() > 15 and q.age_years.max() < 45
