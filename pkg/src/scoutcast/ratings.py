"""Elo-style player ratings: minute-weighted team strength, logistic
expectation, per-match updates, and a deferred inactivity penalty."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path

from .core import DataError, months_between

HOME_WIN = "home-win"
DRAW = "draw"
AWAY_WIN = "away-win"
_SCORES = {HOME_WIN: 1.0, DRAW: 0.5, AWAY_WIN: 0.0}


@dataclass(frozen=True)
class RatingConfig:
    initial_rating: float = 80.0
    logistic_scale: float = 40.0
    k_factor: float = 8.0
    draw_margin: float = 0.0  # used only by the match simulator, never here
    inactivity_grace_months: int = 3
    inactivity_penalty_per_month: float = 2.0

    def __post_init__(self):
        if self.logistic_scale <= 0 or self.k_factor <= 0:
            raise DataError("logistic_scale and k_factor must be positive")
        if self.draw_margin < 0 or self.inactivity_penalty_per_month < 0:
            raise DataError("draw_margin and inactivity penalty must be >= 0")


@dataclass(frozen=True)
class RatingState:
    player_id: int
    rating: float
    last_match_date: date | None = None
    months_inactive: int = 0


@dataclass(frozen=True)
class Match:
    """One fixture: lineups are (player_id, minutes) pairs."""

    match_id: int
    date: date
    home_club: int
    away_club: int
    home_lineup: tuple[tuple[int, int], ...]
    away_lineup: tuple[tuple[int, int], ...]
    result: str
    home_goals: int = 0
    away_goals: int = 0


def team_rating(players: list[tuple[RatingState, int]]) -> float:
    """Average of player ratings weighted by minutes played."""
    total = sum(m for _, m in players)
    if total <= 0:
        raise DataError("team rating needs at least one player with minutes > 0")
    return sum(s.rating * m for s, m in players) / total


def expected_score(r_home: float, r_away: float, cfg: RatingConfig) -> float:
    return 1.0 / (1.0 + 10.0 ** ((r_away - r_home) / cfg.logistic_scale))


def update_after_match(
    home: list[tuple[RatingState, int]],
    away: list[tuple[RatingState, int]],
    result: str,
    cfg: RatingConfig,
) -> tuple[list[RatingState], list[RatingState]]:
    """Apply the post-match adjustment K * (S - E) scaled by minutes/90.

    The away side uses the mirrored score and expectation, so a match moves
    the two teams in opposite directions.
    """
    if result not in _SCORES:
        raise DataError(f"invalid match result token: {result!r}")
    s = _SCORES[result]
    e = expected_score(team_rating(home), team_rating(away), cfg)
    new_home = [
        replace(st, rating=st.rating + cfg.k_factor * (s - e) * (m / 90.0))
        for st, m in home
    ]
    new_away = [
        replace(st, rating=st.rating + cfg.k_factor * ((1.0 - s) - (1.0 - e)) * (m / 90.0))
        for st, m in away
    ]
    return new_home, new_away


def apply_inactivity_penalty(state: RatingState, today: date, cfg: RatingConfig) -> RatingState:
    """Deduct points for a long gap since the last match.

    Applied once, at the player's next appearance; months within the grace
    window are free.
    """
    if state.last_match_date is None:
        raise DataError("inactivity penalty needs a last_match_date")
    months = months_between(state.last_match_date, today)
    if months <= cfg.inactivity_grace_months:
        return replace(state, months_inactive=months)
    penalty = cfg.inactivity_penalty_per_month * (months - cfg.inactivity_grace_months)
    return replace(state, rating=state.rating - penalty, months_inactive=months)


@dataclass
class RatingHistory:
    states: dict[int, RatingState]
    series: dict[int, list[tuple[date, float]]]


class RatingBook:
    """Incremental rating state: feed matches one at a time, in date order."""

    def __init__(self, cfg: RatingConfig, player_ids: list[int] | None = None):
        self.cfg = cfg
        self.states: dict[int, RatingState] = {}
        self.series: dict[int, list[tuple[date, float]]] = {}
        for pid in player_ids or ():
            self._get(pid)

    def _get(self, pid: int) -> RatingState:
        if pid not in self.states:
            self.states[pid] = RatingState(pid, self.cfg.initial_rating)
            self.series[pid] = []
        return self.states[pid]

    def rating_of(self, pid: int) -> float:
        return self.states[pid].rating if pid in self.states else self.cfg.initial_rating

    def process_match(self, match: Match) -> None:
        home = []
        away = []
        for lineup, out in ((match.home_lineup, home), (match.away_lineup, away)):
            for pid, minutes in lineup:
                st = self._get(pid)
                if st.last_match_date is not None:
                    st = apply_inactivity_penalty(st, match.date, self.cfg)
                out.append((st, minutes))
        new_home, new_away = update_after_match(home, away, match.result, self.cfg)
        for st in new_home + new_away:
            st = replace(st, last_match_date=match.date, months_inactive=0)
            self.states[st.player_id] = st
            self.series[st.player_id].append((match.date, st.rating))

    def history(self) -> RatingHistory:
        return RatingHistory(states=self.states, series=self.series)


def run_league_history(
    matches: list[Match],
    cfg: RatingConfig,
    player_ids: list[int] | None = None,
) -> RatingHistory:
    """Replay a chronological match list, producing per-player rating series.

    Every appearance yields exactly one rating point (the post-match value).
    """
    for a, b in zip(matches, matches[1:]):
        if b.date < a.date:
            raise DataError("matches must be sorted by date")
    book = RatingBook(cfg, player_ids)
    for match in matches:
        book.process_match(match)
    return book.history()


def export_rating_series(history: RatingHistory, path: str | Path) -> None:
    """CSV export: player_id,date,rating."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["player_id", "date", "rating"])
        for pid in sorted(history.series):
            for d, r in history.series[pid]:
                w.writerow([pid, d.isoformat(), repr(r)])
