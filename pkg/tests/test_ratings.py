from datetime import date

import numpy as np
import pytest

from scoutcast.core import DataError
from scoutcast.ratings import (
    AWAY_WIN,
    DRAW,
    HOME_WIN,
    Match,
    RatingConfig,
    RatingState,
    apply_inactivity_penalty,
    expected_score,
    run_league_history,
    team_rating,
    update_after_match,
)

CFG = RatingConfig(initial_rating=1500.0, logistic_scale=400.0, k_factor=20.0)


def states(ratings):
    return [RatingState(i, r) for i, r in enumerate(ratings)]


class TestTeamRating:
    def test_single_player(self):
        assert team_rating([(RatingState(0, 1500.0), 90)]) == 1500.0

    def test_symmetric_pair(self):
        s = states([1400.0, 1600.0])
        assert team_rating(list(zip(s, [90, 90]))) == 1500.0

    def test_minute_weighting(self):
        s = states([1400.0, 1600.0])
        got = team_rating(list(zip(s, [90, 45])))
        # brute-force weighted mean
        expect = (1400.0 * 90 + 1600.0 * 45) / 135
        assert got == pytest.approx(expect)
        assert got == pytest.approx(1466.6666666, abs=1e-4)

    def test_zero_minutes_rejected(self):
        with pytest.raises(DataError):
            team_rating([(RatingState(0, 1500.0), 0)])


class TestExpectedScore:
    def test_equal_ratings(self):
        assert expected_score(1500.0, 1500.0, CFG) == 0.5

    def test_one_scale_gap(self):
        # closed form: 1/(1+10^-1) = 10/11
        assert expected_score(1900.0, 1500.0, CFG) == pytest.approx(10.0 / 11.0, abs=1e-12)

    def test_swap_complements(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            a, b = rng.normal(1500, 200, size=2)
            assert expected_score(a, b, CFG) + expected_score(b, a, CFG) == pytest.approx(1.0, abs=1e-12)

    def test_monotone_in_home(self):
        assert expected_score(1600.0, 1500.0, CFG) > expected_score(1550.0, 1500.0, CFG)


class TestUpdateAfterMatch:
    def test_hand_computed_deltas(self):
        # E = 0.75 needs r_home - r_away = s*log10(3)
        gap = 400.0 * np.log10(3.0)
        home = [(RatingState(0, 1500.0 + gap), 90), (RatingState(1, 1500.0 + gap), 45)]
        away = [(RatingState(2, 1500.0), 90), (RatingState(3, 1500.0), 90)]
        nh, _ = update_after_match(home, away, HOME_WIN, CFG)
        assert nh[0].rating - home[0][0].rating == pytest.approx(20.0 * 0.25, abs=1e-9)
        assert nh[1].rating - home[1][0].rating == pytest.approx(20.0 * 0.25 * 0.5, abs=1e-9)

    def test_draw_at_even_expectation(self):
        home = [(RatingState(0, 1500.0), 90)]
        away = [(RatingState(1, 1500.0), 90)]
        nh, na = update_after_match(home, away, DRAW, CFG)
        assert nh[0].rating == 1500.0
        assert na[0].rating == 1500.0

    def test_sides_move_oppositely(self):
        home = [(RatingState(0, 1480.0), 90)]
        away = [(RatingState(1, 1520.0), 90)]
        nh, na = update_after_match(home, away, HOME_WIN, CFG)
        assert nh[0].rating > 1480.0
        assert na[0].rating < 1520.0

    def test_invalid_token(self):
        home = [(RatingState(0, 1500.0), 90)]
        with pytest.raises(DataError):
            update_after_match(home, home, "homewin", CFG)

    def test_minute_weighted_conservation(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            minutes = rng.integers(10, 91, size=6)
            home = [(RatingState(i, float(rng.normal(1500, 100))), int(m))
                    for i, m in enumerate(minutes[:3])]
            # equal total minutes on both sides
            away_minutes = rng.integers(10, 91, size=2).tolist()
            away_minutes.append(int(sum(m for _, m in home) - sum(away_minutes)))
            if away_minutes[-1] <= 0:
                continue
            away = [(RatingState(10 + i, float(rng.normal(1500, 100))), m)
                    for i, m in enumerate(away_minutes)]
            result = [HOME_WIN, DRAW, AWAY_WIN][int(rng.integers(3))]
            nh, na = update_after_match(home, away, result, CFG)
            # deltas are already minute-weighted; equal minute totals => sum 0
            total = sum(n.rating - o.rating for n, (o, _) in zip(nh, home))
            total += sum(n.rating - o.rating for n, (o, _) in zip(na, away))
            assert abs(total) < 1e-9


class TestInactivityPenalty:
    CFG = RatingConfig(inactivity_grace_months=3, inactivity_penalty_per_month=2.0)

    def test_within_grace(self):
        st = RatingState(0, 80.0, last_match_date=date(2020, 1, 10))
        out = apply_inactivity_penalty(st, date(2020, 3, 15), self.CFG)
        assert out.rating == 80.0
        assert out.months_inactive == 2

    def test_beyond_grace(self):
        st = RatingState(0, 80.0, last_match_date=date(2020, 1, 10))
        out = apply_inactivity_penalty(st, date(2020, 7, 15), self.CFG)
        assert out.rating == pytest.approx(80.0 - 2.0 * 3)
        assert out.months_inactive == 6

    def test_zero_penalty_identity(self):
        cfg = RatingConfig(inactivity_grace_months=3, inactivity_penalty_per_month=0.0)
        st = RatingState(0, 80.0, last_match_date=date(2019, 1, 1))
        assert apply_inactivity_penalty(st, date(2020, 6, 1), cfg).rating == 80.0

    def test_requires_last_match(self):
        with pytest.raises(DataError):
            apply_inactivity_penalty(RatingState(0, 80.0), date(2020, 1, 1), self.CFG)


def make_match(mid, d, result, home_ids, away_ids, minutes=90):
    return Match(mid, d, 0, 1,
                 tuple((p, minutes) for p in home_ids),
                 tuple((p, minutes) for p in away_ids), result)


class TestRunLeagueHistory:
    def test_zero_matches(self):
        hist = run_league_history([], CFG, player_ids=[1, 2, 3])
        assert all(s.rating == CFG.initial_rating for s in hist.states.values())
        assert all(series == [] for series in hist.series.values())

    def test_one_point_per_appearance(self):
        matches = [
            make_match(0, date(2020, 1, 5), HOME_WIN, [1, 2], [3, 4]),
            make_match(1, date(2020, 1, 12), DRAW, [1, 3], [2, 4]),
        ]
        hist = run_league_history(matches, CFG)
        assert all(len(hist.series[p]) == 2 for p in (1, 2, 3, 4))

    def test_upset_moves_more(self):
        strong = [(RatingState(0, 1600.0), 90)]
        weak = [(RatingState(1, 1400.0), 90)]
        expected_win, _ = update_after_match(strong, weak, HOME_WIN, CFG)
        upset, _ = update_after_match(strong, weak, AWAY_WIN, CFG)
        assert abs(upset[0].rating - 1600.0) > abs(expected_win[0].rating - 1600.0)

    def test_unsorted_rejected(self):
        matches = [
            make_match(0, date(2020, 2, 1), DRAW, [1], [2]),
            make_match(1, date(2020, 1, 1), DRAW, [1], [2]),
        ]
        with pytest.raises(DataError):
            run_league_history(matches, CFG)

    def test_deterministic_replay(self):
        rng = np.random.default_rng(8)
        matches = []
        day = date(2020, 1, 1).toordinal()
        for i in range(200):
            ids = rng.permutation(20)[:8]
            res = [HOME_WIN, DRAW, AWAY_WIN][int(rng.integers(3))]
            matches.append(make_match(i, date.fromordinal(day + i), res,
                                      ids[:4].tolist(), ids[4:].tolist()))
        h1 = run_league_history(matches, CFG)
        h2 = run_league_history(matches, CFG)
        assert h1.series == h2.series

    def test_penalty_applied_once_at_next_appearance(self):
        cfg = RatingConfig(initial_rating=80.0, logistic_scale=40.0, k_factor=0.0001,
                           inactivity_grace_months=3, inactivity_penalty_per_month=2.0)
        matches = [
            make_match(0, date(2020, 1, 5), DRAW, [1], [2]),
            make_match(1, date(2020, 7, 5), DRAW, [1], [2]),  # both idle 6 months
            make_match(2, date(2020, 7, 12), DRAW, [1], [2]),  # no further penalty
        ]
        hist = run_league_history(matches, cfg)
        r_after_gap = hist.series[1][1][1]
        assert r_after_gap == pytest.approx(80.0 - 2.0 * 3, abs=1e-3)
        assert hist.series[1][2][1] == pytest.approx(r_after_gap, abs=1e-3)
