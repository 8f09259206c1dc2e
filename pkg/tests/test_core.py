import numpy as np
import pytest

from scoutcast.core import (
    CONTINUOUS,
    DISCRETE,
    DataError,
    Dataset,
    FeatureSchema,
    age_at,
    dataset_split_by_time,
    holdout_players,
    load_dataset_csv,
    month_index,
    month_start,
    months_between,
    save_dataset_csv,
)
from datetime import date


def make_dataset(n=40, p=3, seed=0, years=(2014, 2022), n_players=10):
    rng = np.random.default_rng(seed)
    schema = FeatureSchema(
        tuple(f"f{j}" for j in range(p)),
        tuple(CONTINUOUS if j % 2 == 0 else DISCRETE for j in range(p)),
    )
    yrs = rng.integers(years[0], years[1] + 1, size=n)
    months = rng.integers(1, 13, size=n)
    dates = np.array([f"{y}-{m:02d}-01" for y, m in zip(yrs, months)], dtype="datetime64[D]")
    return Dataset(
        schema=schema,
        X=rng.normal(size=(n, p)),
        y=rng.normal(size=n),
        player_id=rng.integers(0, n_players, size=n).astype(np.int64),
        snapshot_date=dates,
        age_years=rng.uniform(17, 38, size=n),
        current_indicator=rng.normal(80, 15, size=n),
        indicator_kind="quality",
    )


class TestDates:
    def test_months_between_whole_months(self):
        assert months_between(date(2019, 3, 1), date(2020, 3, 1)) == 12

    def test_months_between_floor(self):
        assert months_between(date(2019, 3, 15), date(2019, 6, 1)) == 2

    def test_month_index_round_trip(self):
        d = date(2021, 7, 1)
        assert month_start(month_index(d)) == d

    def test_age_at(self):
        assert age_at(date(2000, 1, 1), date(2026, 1, 1)) == pytest.approx(26.0)


class TestSplitByTime:
    def test_paper_partition(self):
        d = make_dataset(n=300, years=(2014, 2022), seed=1)
        train, test = dataset_split_by_time(d, 2020)
        assert set(train.years()) <= set(range(2014, 2021))
        assert set(test.years()) == {2021, 2022}
        assert len(train) + len(test) == len(d)

    def test_empty_test_errors(self):
        d = make_dataset(n=50, years=(2019, 2019))
        with pytest.raises(DataError, match="test"):
            dataset_split_by_time(d, 2020)

    def test_empty_train_errors(self):
        d = make_dataset(n=50, years=(2021, 2022))
        with pytest.raises(DataError, match="train"):
            dataset_split_by_time(d, 2019)

    def test_year_boundary(self):
        d = make_dataset(n=2, years=(2020, 2020))
        dates = np.array(["2020-12-31", "2021-01-01"], dtype="datetime64[D]")
        d = Dataset(d.schema, d.X.copy(), d.y.copy(), d.player_id.copy(), dates,
                    d.age_years.copy(), d.current_indicator.copy(), "quality")
        train, test = dataset_split_by_time(d, 2020)
        assert len(train) == 1 and len(test) == 1

    def test_no_overlap(self):
        d = make_dataset(n=200, seed=4)
        train, test = dataset_split_by_time(d, 2018)
        keys = set(zip(train.player_id.tolist(), train.snapshot_date.astype(str).tolist(),
                       train.y.tolist()))
        for k in zip(test.player_id.tolist(), test.snapshot_date.astype(str).tolist(),
                     test.y.tolist()):
            assert k not in keys


class TestHoldout:
    def test_player_level_split(self):
        d = make_dataset(n=400, n_players=60, seed=2)
        kept, held = holdout_players(d, 0.2, seed=7)
        assert set(kept.player_id) & set(held.player_id) == set()
        assert len(kept) + len(held) == len(d)

    def test_share_near_fraction(self):
        d = make_dataset(n=4000, n_players=600, seed=3)
        kept, held = holdout_players(d, 0.05, seed=1)
        n_held = len(set(held.player_id.tolist()))
        n_total = len(set(d.player_id.tolist()))
        assert abs(n_held / n_total - 0.05) < 0.02

    def test_two_players_half_one_stratum(self):
        d = make_dataset(n=30, n_players=2, seed=5)
        # force both players into a single stratum (same ages, same indicator)
        d = Dataset(d.schema, d.X.copy(), d.y.copy(), d.player_id.copy(),
                    d.snapshot_date.copy(), np.full(len(d), 25.0),
                    np.full(len(d), 80.0), "quality")
        kept, held = holdout_players(d, 0.5, seed=0)
        assert len(set(held.player_id.tolist())) == 1

    def test_deterministic(self):
        d = make_dataset(n=300, n_players=40, seed=6)
        _, h1 = holdout_players(d, 0.1, seed=42)
        _, h2 = holdout_players(d, 0.1, seed=42)
        assert np.array_equal(h1.player_id, h2.player_id)
        assert np.array_equal(h1.X, h2.X)

    def test_bad_fraction(self):
        d = make_dataset()
        for frac in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(DataError):
                holdout_players(d, frac, seed=0)


class TestCsvRoundTrip:
    def test_bit_exact(self, tmp_path):
        d = make_dataset(n=77, p=4, seed=9)
        path = tmp_path / "ds.csv"
        save_dataset_csv(d, path)
        d2 = load_dataset_csv(path)
        assert d2.schema == d.schema
        assert d2.indicator_kind == d.indicator_kind
        assert np.array_equal(d.X, d2.X)
        assert np.array_equal(d.y, d2.y)
        assert np.array_equal(d.player_id, d2.player_id)
        assert np.array_equal(d.snapshot_date, d2.snapshot_date)
        assert np.array_equal(d.age_years, d2.age_years)
        assert np.array_equal(d.current_indicator, d2.current_indicator)

    def test_header_layout(self, tmp_path):
        d = make_dataset(n=3, p=2)
        path = tmp_path / "ds.csv"
        save_dataset_csv(d, path)
        header = path.read_text().splitlines()[0]
        assert header == "f0,f1,label,player_id,snapshot_date,age_years,current_indicator"

    def test_awkward_floats_survive(self, tmp_path):
        d = make_dataset(n=4, p=2, seed=13)
        X = d.X.copy()
        X[0, 0] = 0.1 + 0.2           # classic non-representable sum
        X[1, 0] = 1e-300
        X[2, 1] = 12345678.900000001
        d = Dataset(d.schema, X, d.y.copy(), d.player_id.copy(), d.snapshot_date.copy(),
                    d.age_years.copy(), d.current_indicator.copy(), "quality")
        path = tmp_path / "ds.csv"
        save_dataset_csv(d, path)
        assert np.array_equal(load_dataset_csv(path).X, X)


class TestDatasetInvariants:
    def test_rejects_nan(self):
        d = make_dataset(n=10)
        X = d.X.copy()
        X[3, 0] = np.nan
        with pytest.raises(DataError):
            Dataset(d.schema, X, d.y.copy(), d.player_id.copy(), d.snapshot_date.copy(),
                    d.age_years.copy(), d.current_indicator.copy(), "quality")

    def test_immutable_arrays(self):
        d = make_dataset(n=10)
        with pytest.raises(ValueError):
            d.X[0, 0] = 99.0

    def test_select_features_reorders(self):
        d = make_dataset(n=10, p=3)
        sub = d.select_features(["f2", "f0"])
        assert sub.schema.names == ("f2", "f0")
        assert np.array_equal(sub.X[:, 0], d.X[:, 2])

    def test_unknown_feature(self):
        d = make_dataset()
        with pytest.raises(DataError):
            d.select_features(["nope"])

    def test_example_view(self):
        d = make_dataset(n=5)
        ex = d.example(2)
        assert ex.label == d.y[2]
        assert ex.player_id == d.player_id[2]
        assert len(ex.features) == d.n_features

    def test_duplicate_names_rejected(self):
        with pytest.raises(DataError):
            FeatureSchema(("a", "a"), (CONTINUOUS, DISCRETE))
