"""Synthetic league generator: players, matches, transfers, and values.

Stands in for proprietary provider data so the full forecasting pipeline can
run end to end. The ground-truth dynamics are documented in the README:
ability follows a quadratic age curve plus AR(1) noise, young players are
pulled toward their team's level at a player-specific (unobservable) rate,
and volatility grows with ability level. Those three ingredients make the
qualitative model comparisons reproducible on seeded data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from datetime import date
from pathlib import Path

import numpy as np

from .core import (
    DataError,
    MatchAppearance,
    PlayerHistory,
    PlayerProfile,
    month_index,
    month_start,
)
from .ratings import AWAY_WIN, DRAW, HOME_WIN, Match, RatingBook, RatingConfig

N_NATIONALITIES = 20
PLAY_MONTHS = range(1, 11)  # season offsets Aug..May; Jun/Jul are match-free

# peak-age shift per position (GK, DEF, MID, ATT); deliberately not affine in
# the position code so age, position, and years-to-peak stay linearly independent
POSITION_PEAK_OFFSETS = (3.0, 1.4, 0.0, -1.8)


@dataclass(frozen=True)
class AbilityCurve:
    peak_age: float = 26.0
    curvature: float = 0.14
    idiosyncratic_sd: float = 14.0


@dataclass(frozen=True)
class ValueModel:
    base_eur: float = 2_000_000.0
    rating_elasticity: float = 1.1
    age_discount: float = 0.10
    contract_discount: float = 0.30
    league_premium: float = 0.60
    noise_sd_log: float = 0.12
    peak_value_age: float = 26.0
    rating_center: float = 85.0
    rating_scale: float = 15.0

    def __post_init__(self):
        for name in ("base_eur", "rating_elasticity", "age_discount",
                     "contract_discount", "league_premium", "rating_scale"):
            if getattr(self, name) <= 0:
                raise DataError(f"value model parameter {name} must be > 0")


@dataclass(frozen=True)
class SimConfig:
    n_players: int = 2000
    n_clubs: int = 108
    n_leagues: int = 3
    seasons: int = 10
    matches_per_season: int = 30
    seed: int = 0
    ability_curve: AbilityCurve = field(default_factory=AbilityCurve)
    ar1_rho: float = 0.85
    value_model: ValueModel = field(default_factory=ValueModel)
    rating: RatingConfig = field(
        default_factory=lambda: RatingConfig(
            initial_rating=85.0, logistic_scale=12.0, k_factor=4.0, draw_margin=2.0,
            inactivity_penalty_per_month=3.0))
    start_year: int = 2013
    # match generation
    outcome_scale: float = 12.0
    selection_noise: float = 7.0
    # club form: AR(1) swings in realized team strength, amplified in the top
    # flight (big-club pressure); keeps ages inside a tier equally affected
    club_form_rho: float = 0.90
    club_form_sd: float = 1.0
    club_form_level_coef: float = 5.0
    star_full_minutes: int = 3
    rotation_age: float = 23.0  # only players at least this old get substituted
    # young players go through no-play spells (loans, benchings)
    youth_bench_rate: float = 0.12
    bench_min_months: int = 2
    bench_max_months: int = 7
    # latent dynamics
    ar1_noise_sd: float = 1.6
    mentor_gain: float = 0.06
    growth_mult_sd: float = 0.6
    youth_growth_sd: float = 3.0   # monthly random-walk sd of young development
    curve_mult_sd: float = 0.7     # player-specific aging-curve multiplier (log sd)
    youth_vol_coef: float = 0.5
    old_vol_coef: float = 1.2
    level_vol_ref: float = 25.0
    level_vol_coef: float = 1.0
    level_vol_scale: float = 12.0
    # squad churn
    injury_rate: float = 0.012
    injury_max_months: int = 6
    transfer_fraction: float = 0.05
    contract_min_months: int = 12
    contract_max_months: int = 48
    retire_age: float = 39.0
    intake_age_min: int = 16
    intake_age_max: int = 19

    def __post_init__(self):
        if min(self.n_players, self.n_clubs, self.n_leagues, self.seasons,
               self.matches_per_season) <= 0:
            raise DataError("simulation counts must be positive")
        if not 0.0 <= self.ar1_rho < 1.0:
            raise DataError("ar1_rho must lie in [0, 1)")
        if self.n_clubs % (2 * self.n_leagues) != 0:
            raise DataError("n_clubs must be an even multiple of n_leagues")
        if self.n_players < 16 * self.n_clubs:
            raise DataError("need at least 16 players per club to field squads")

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "ability_curve" in d:
            d["ability_curve"] = AbilityCurve(**d["ability_curve"])
        if "value_model" in d:
            d["value_model"] = ValueModel(**d["value_model"])
        if "rating" in d:
            d["rating"] = RatingConfig(**d["rating"])
        return cls(**d)


@dataclass
class _PlayerState:
    peak_level: float
    growth_mult: float
    curve_mult: float = 1.0
    dev: float = 0.0
    ar: float = 0.0
    injured_until: int = -1  # global month id, exclusive
    retired: bool = False


class Population:
    """Mutable simulation world: players, clubs, and latent ability state."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.profiles: dict[int, PlayerProfile] = {}
        self.state: dict[int, _PlayerState] = {}
        self.club_of: dict[int, int] = {}
        self.contract_end: dict[int, int] = {}  # month_index
        self.histories: dict[int, PlayerHistory] = {}
        self.rosters: dict[int, list[int]] = {}
        self.club_tier: dict[int, int] = {}
        self.league_of_club: dict[int, int] = {}
        self.league_strength: dict[int, float] = {}
        self.club_form: dict[int, float] = {}
        self.next_pid = 0
        self.next_match_id = 0
        self.book = RatingBook(cfg.rating)
        self.start_month = month_index(date(cfg.start_year, 7, 1))
        seq = np.random.SeedSequence(cfg.seed)
        (self.rng_pop, self.rng_ability, self.rng_match,
         self.rng_squad, self.rng_club) = [np.random.default_rng(s) for s in seq.spawn(5)]

    # -- helpers ---------------------------------------------------------

    def age_of(self, pid: int, month: int) -> float:
        return (self.start_month + month - month_index(self.profiles[pid].birth_date)) / 12.0

    def peak_age_of(self, pid: int) -> float:
        return self.cfg.ability_curve.peak_age + POSITION_PEAK_OFFSETS[self.profiles[pid].position]

    def ability_of(self, pid: int, month: int) -> float:
        st = self.state[pid]
        cv = self.cfg.ability_curve
        curve = -cv.curvature * st.curve_mult * (self.age_of(pid, month) - self.peak_age_of(pid)) ** 2
        return st.peak_level + curve + st.dev + st.ar

    def date_of(self, month: int, day: int = 1) -> date:
        d0 = month_start(self.start_month + month)
        return date(d0.year, d0.month, day)

    def active_players(self) -> list[int]:
        return [pid for pid, st in self.state.items() if not st.retired]

    def _new_player(self, age_years: float, month: int, club: int) -> int:
        pid = self.next_pid
        self.next_pid += 1
        birth = month_start(self.start_month + month - int(round(age_years * 12)))
        profile = PlayerProfile(
            player_id=pid,
            birth_date=birth,
            nationality=int(self.rng_pop.integers(N_NATIONALITIES)),
            position=int(self.rng_pop.integers(4)),
        )
        cv = self.cfg.ability_curve
        self.profiles[pid] = profile
        self.state[pid] = _PlayerState(
            peak_level=float(self.rng_pop.normal(0.0, cv.idiosyncratic_sd)),
            growth_mult=float(np.exp(self.rng_pop.normal(0.0, self.cfg.growth_mult_sd))),
            curve_mult=float(np.exp(self.rng_pop.normal(0.0, self.cfg.curve_mult_sd))),
        )
        hist = PlayerHistory(profile=profile)
        self.histories[pid] = hist
        self._assign_club(pid, club, month)
        self._renew_contract(pid, month)
        return pid

    def _assign_club(self, pid: int, club: int, month: int) -> None:
        old = self.club_of.get(pid)
        if old is not None and pid in self.rosters.get(old, []):
            self.rosters[old].remove(pid)
        self.club_of[pid] = club
        self.rosters.setdefault(club, []).append(pid)
        d = self.date_of(month)
        hist = self.histories[pid]
        hist.club_series.append((d, club))
        hist.league_strength_series.append((d, self.league_strength[self.club_tier[club]]))

    def _renew_contract(self, pid: int, month: int) -> None:
        length = int(self.rng_squad.integers(self.cfg.contract_min_months,
                                             self.cfg.contract_max_months + 1))
        end = self.start_month + month + length
        self.contract_end[pid] = end
        self.histories[pid].contract_series.append((self.date_of(month), month_start(end)))


def generate_population(cfg: SimConfig) -> Population:
    """Create clubs, leagues, and the season-1 player pool.

    Ages are uniform on [16, 38]; stronger players land in stronger leagues
    so league strength carries signal.
    """
    world = Population(cfg)
    clubs_per_league = cfg.n_clubs // cfg.n_leagues
    for club in range(cfg.n_clubs):
        league = club // clubs_per_league
        world.league_of_club[club] = league
        world.club_tier[club] = league
        world.club_form[club] = 0.0
    for tier in range(cfg.n_leagues):
        world.league_strength[tier] = (cfg.n_leagues - tier) / cfg.n_leagues

    ages = world.rng_pop.uniform(16.0, 38.0, size=cfg.n_players)
    raw_quality = world.rng_pop.normal(0.0, 1.0, size=cfg.n_players)
    # best players go to the strongest league; within a league, clubs are
    # dealt round-robin so league rivals stay comparable
    noisy = raw_quality + world.rng_pop.normal(0.0, 0.6, size=cfg.n_players)
    order = np.argsort(-noisy)
    per_league = int(math.ceil(cfg.n_players / cfg.n_leagues))
    for rank, idx in enumerate(order):
        league = min(rank // per_league, cfg.n_leagues - 1)
        club = league * clubs_per_league + (rank % per_league) % clubs_per_league
        pid = world._new_player(float(ages[idx]), 0, club)
        st = world.state[pid]
        st.peak_level = float(raw_quality[idx] * cfg.ability_curve.idiosyncratic_sd)
    return world


def _monthly_latent_update(world: Population, month: int) -> None:
    cfg = world.cfg
    cv = cfg.ability_curve
    team_mean: dict[int, float] = {}
    for club, roster in world.rosters.items():
        live = [p for p in roster if not world.state[p].retired]
        if live:
            team_mean[club] = sum(world.ability_of(p, month) for p in live) / len(live)
    strengths = world.league_strength
    s_lo, s_hi = min(strengths.values()), max(strengths.values())
    span = (s_hi - s_lo) or 1.0
    for club in sorted(world.club_form):
        tier_factor = (strengths[world.club_tier[club]] - s_lo) / span
        vol = cfg.club_form_sd * (1.0 + cfg.club_form_level_coef * tier_factor)
        world.club_form[club] = (cfg.club_form_rho * world.club_form[club]
                                 + float(world.rng_club.normal(0.0, vol)))
    for pid in world.active_players():
        st = world.state[pid]
        age = world.age_of(pid, month)
        ability = world.ability_of(pid, month)
        club = world.club_of[pid]
        gap = team_mean.get(club, ability) - ability
        peak = world.peak_age_of(pid)
        youth = min(max((peak - age) / (peak - 16.0), 0.0), 1.0)
        st.dev += cfg.mentor_gain * gap * youth * st.growth_mult
        if youth > 0:
            st.dev += float(world.rng_ability.normal(
                0.0, cfg.youth_growth_sd * youth * st.growth_mult))
        vol = cfg.ar1_noise_sd * (
            1.0
            + cfg.youth_vol_coef * youth
            + cfg.old_vol_coef * max(0.0, (age - 30.0) / 8.0)
            + cfg.level_vol_coef * max(0.0, ability - cfg.level_vol_ref) / cfg.level_vol_scale
        )
        st.ar = cfg.ar1_rho * st.ar + float(world.rng_ability.normal(0.0, vol))


def _injury_step(world: Population, month: int) -> None:
    cfg = world.cfg
    for pid in world.active_players():
        st = world.state[pid]
        if st.injured_until > month:
            continue
        if world.rng_squad.random() < cfg.injury_rate:
            st.injured_until = month + 1 + int(world.rng_squad.integers(cfg.injury_max_months))
            continue
        # no-play spells (loans, lost coach trust) concentrate on the young
        peak = world.peak_age_of(pid)
        youth = min(max((peak - world.age_of(pid, month)) / (peak - 16.0), 0.0), 1.0)
        if youth > 0 and world.rng_squad.random() < cfg.youth_bench_rate * youth * youth:
            st.injured_until = month + int(world.rng_squad.integers(
                cfg.bench_min_months, cfg.bench_max_months + 1))


def _transfer_window(world: Population, month: int) -> None:
    cfg = world.cfg
    active = sorted(world.active_players())
    n_moves = int(len(active) * cfg.transfer_fraction)
    movers = world.rng_squad.choice(len(active), size=n_moves, replace=False)
    min_roster = 13
    for mi in movers:
        pid = active[int(mi)]
        src = world.club_of[pid]
        if len([p for p in world.rosters[src] if not world.state[p].retired]) <= min_roster:
            continue
        tier = world.club_tier[src]
        tiers = [t for t in (tier - 1, tier, tier + 1) if 0 <= t < cfg.n_leagues]
        target_tier = int(world.rng_squad.choice(tiers))
        candidates = [c for c, t in world.club_tier.items() if t == target_tier and c != src]
        dst = int(world.rng_squad.choice(candidates))
        world._assign_club(pid, dst, month)
        world._renew_contract(pid, month)
    # renew contracts that have run out
    now = world.start_month + month
    for pid in active:
        if world.contract_end[pid] <= now:
            world._renew_contract(pid, month)


def _intake_and_retire(world: Population, month: int) -> None:
    cfg = world.cfg
    for pid in world.active_players():
        if world.age_of(pid, month) >= cfg.retire_age:
            world.state[pid].retired = True
    target = int(math.ceil(cfg.n_players / cfg.n_clubs))
    for club in range(cfg.n_clubs):
        live = [p for p in world.rosters.get(club, []) if not world.state[p].retired]
        for _ in range(max(0, target - len(live))):
            age = float(world.rng_squad.integers(cfg.intake_age_min, cfg.intake_age_max + 1))
            world._new_player(age, month, club)


def _match_outcome(world: Population, diff: float) -> str:
    cfg = world.cfg
    s = cfg.outcome_scale
    dm = cfg.rating.draw_margin
    p_home = 1.0 / (1.0 + 10.0 ** (-(diff - dm) / s))
    p_away = 1.0 / (1.0 + 10.0 ** ((diff + dm) / s))
    u = world.rng_match.random()
    if u < p_home:
        return HOME_WIN
    if u < p_home + p_away:
        return AWAY_WIN
    return DRAW


def _goals_for(world: Population, result: str) -> tuple[int, int]:
    g = int(world.rng_match.poisson(1.0))
    if result == DRAW:
        return g, g
    loser = min(g, 2)
    winner = loser + 1 + int(world.rng_match.poisson(0.7))
    return (winner, loser) if result == HOME_WIN else (loser, winner)


def _lineup(world: Population, club: int, month: int) -> list[tuple[int, int]]:
    """Pick 11 slots with three substitutions; returns (player_id, minutes)."""
    roster = [p for p in world.rosters[club]
              if not world.state[p].retired and world.state[p].injured_until <= month]
    if len(roster) < 11:
        roster = [p for p in world.rosters[club] if not world.state[p].retired]
    keys = {p: world.ability_of(p, month) + world.rng_match.normal(0.0, world.cfg.selection_noise)
            for p in roster}
    picked = sorted(roster, key=lambda p: -keys[p])[:15]
    starters, subs = picked[:11], picked[11:15]
    out = [(p, 90) for p in starters]
    if len(starters) == 11 and subs:
        # stars and fielded youngsters play the full match; veterans rotate
        by_rating = sorted(range(11), key=lambda i: -world.book.rating_of(starters[i]))
        stars = set(by_rating[:world.cfg.star_full_minutes])
        rotatable = [i for i in range(11) if i not in stars
                     and world.age_of(starters[i], month) >= world.cfg.rotation_age]
        if len(rotatable) < len(subs):
            rotatable = [i for i in range(11) if i not in stars]
        slots = world.rng_match.choice(len(rotatable), size=len(subs), replace=False)
        for slot, sub in zip(slots, subs):
            i = rotatable[int(slot)]
            cut = int(world.rng_match.integers(45, 76))
            out[i] = (out[i][0], cut)
            out.append((sub, 90 - cut))
    return out


def simulate_season(world: Population, cfg: SimConfig, season: int) -> list[Match]:
    """Advance the world by one season (12 months) and return its matches."""
    matches: list[Match] = []
    rounds_per_month = max(1, cfg.matches_per_season // len(PLAY_MONTHS))
    clubs_per_league = cfg.n_clubs // cfg.n_leagues
    for k in range(12):
        month = season * 12 + k
        cal_month = (6 + k) % 12 + 1  # season starts in July
        if cal_month == 7 and season > 0:
            _intake_and_retire(world, month)
        if cal_month in (1, 7):
            _transfer_window(world, month)
        _monthly_latent_update(world, month)
        _injury_step(world, month)
        if k not in PLAY_MONTHS:
            continue
        spacing = max(1, 25 // max(rounds_per_month, 1))
        for rnd in range(rounds_per_month):
            day = 2 + rnd * spacing  # never day 1, so snapshots stay leak-free
            for league in range(cfg.n_leagues):
                clubs = list(range(league * clubs_per_league, (league + 1) * clubs_per_league))
                world.rng_match.shuffle(clubs)
                for i in range(0, len(clubs) - 1, 2):
                    home, away = clubs[i], clubs[i + 1]
                    matches.append(_play_match(world, home, away, month, day))
    return matches


def _play_match(world: Population, home: int, away: int, month: int, day: int) -> Match:
    d = world.date_of(month, day)
    hl = _lineup(world, home, month)
    al = _lineup(world, away, month)
    ha = sum(world.ability_of(p, month) * m for p, m in hl) / sum(m for _, m in hl)
    aa = sum(world.ability_of(p, month) * m for p, m in al) / sum(m for _, m in al)
    ha += world.club_form[home]
    aa += world.club_form[away]
    result = _match_outcome(world, ha - aa)
    hg, ag = _goals_for(world, result)
    mid = world.next_match_id
    world.next_match_id += 1
    for pid, minutes in hl:
        world.histories[pid].appearances.append(
            MatchAppearance(mid, d, home, away, minutes, hg, ag))
    for pid, minutes in al:
        world.histories[pid].appearances.append(
            MatchAppearance(mid, d, away, home, minutes, ag, hg))
    match = Match(mid, d, home, away, tuple(hl), tuple(al), result, hg, ag)
    world.book.process_match(match)
    return match


def value_from_factors(z_rating: float, age_years: float, contract_months_left: float,
                       league_tier: int, vm: ValueModel, noise_factor: float = 1.0) -> float:
    """Closed-form transfer value for one player-month."""
    age_factor = math.exp(-vm.age_discount * max(0.0, age_years - vm.peak_value_age))
    contract_factor = 1.0 - vm.contract_discount if contract_months_left < 6 else 1.0
    return (vm.base_eur * math.exp(vm.rating_elasticity * z_rating)
            * age_factor * contract_factor * vm.league_premium ** league_tier * noise_factor)


def generate_transfer_values(world: Population, rating_series: dict[int, list[tuple[date, float]]],
                             cfg: SimConfig, n_months: int) -> dict[int, list[tuple[date, float]]]:
    """Monthly EUR values driven by rating, age, contract, and league tier."""
    vm = cfg.value_model
    out: dict[int, list[tuple[date, float]]] = {}
    for pid in sorted(rating_series):
        series = rating_series[pid]
        if not series:
            out[pid] = []
            continue
        rng = np.random.default_rng([cfg.seed, 7, pid])
        r_months = np.array([month_index(d) for d, _ in series])
        r_values = np.array([v for _, v in series])
        c_months = np.array([month_index(d) for d, _ in world.histories[pid].club_series])
        c_clubs = [c for _, c in world.histories[pid].club_series]
        e_months = np.array([month_index(d) for d, _ in world.histories[pid].contract_series])
        e_ends = [month_index(e) for _, e in world.histories[pid].contract_series]
        first = int(r_months[0]) + 1  # value known from the month after the debut
        points = []
        for gm in range(first, world.start_month + n_months):
            t = month_start(gm)
            # the day-1 value uses ratings from strictly earlier months
            rating = r_values[np.searchsorted(r_months, gm, side="left") - 1]
            z = (rating - vm.rating_center) / vm.rating_scale
            age = (gm - month_index(world.profiles[pid].birth_date)) / 12.0
            ci = np.searchsorted(c_months, gm, side="right") - 1
            tier = world.club_tier[c_clubs[max(ci, 0)]]
            ei = np.searchsorted(e_months, gm, side="right") - 1
            months_left = max(0, e_ends[max(ei, 0)] - gm)
            noise = math.exp(rng.normal(0.0, vm.noise_sd_log)) if vm.noise_sd_log > 0 else 1.0
            points.append((t, value_from_factors(z, age, months_left, tier, vm, noise)))
        out[pid] = points
        world.histories[pid].value_series = points
    return out


@dataclass
class HistoryBundle:
    """Simulation output consumed by the feature pipeline."""

    players: dict[int, PlayerHistory]
    club_tier: dict[int, int]
    league_strength: dict[int, float]
    matches: list[Match]
    config: SimConfig
    start_month: int
    n_months: int


def run_simulation(cfg: SimConfig) -> HistoryBundle:
    """Full generator: population, seasons, Elo replay, and value series."""
    world = generate_population(cfg)
    matches: list[Match] = []
    for season in range(cfg.seasons):
        matches.extend(simulate_season(world, cfg, season))
    matches.sort(key=lambda m: (m.date, m.match_id))
    # matches are generated in chronological order, so the in-simulation book
    # is exactly the replay of the sorted list (asserted in the tests)
    history = world.book.history()
    for pid, series in history.series.items():
        world.histories[pid].rating_series = series
    n_months = cfg.seasons * 12
    generate_transfer_values(world, history.series, cfg, n_months)
    return HistoryBundle(
        players=world.histories,
        club_tier=world.club_tier,
        league_strength=world.league_strength,
        matches=matches,
        config=cfg,
        start_month=world.start_month,
        n_months=n_months,
    )


# -- bundle persistence (directory of .npy files: byte-deterministic) ------

def _dates_to_days(dates: list[date]) -> np.ndarray:
    return np.array([d.toordinal() for d in dates], dtype=np.int64)


def save_bundle(bundle: HistoryBundle, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pids = sorted(bundle.players)
    prof = np.array([
        (p, bundle.players[p].profile.birth_date.toordinal(),
         bundle.players[p].profile.nationality, bundle.players[p].profile.position)
        for p in pids
    ], dtype=np.int64)
    np.save(out / "profiles.npy", prof)

    app_rows = []
    for p in pids:
        for a in bundle.players[p].appearances:
            app_rows.append((p, a.match_id, a.date.toordinal(), a.club_id,
                             a.opponent_id, a.minutes, a.team_goals, a.opponent_goals))
    np.save(out / "appearances.npy", np.array(app_rows, dtype=np.int64))

    def save_series(name, getter, dtype=float):
        rows_pid, rows_day, rows_val = [], [], []
        for p in pids:
            for d, v in getter(bundle.players[p]):
                rows_pid.append(p)
                rows_day.append(d.toordinal())
                rows_val.append(v)
        np.save(out / f"{name}_pid.npy", np.array(rows_pid, dtype=np.int64))
        np.save(out / f"{name}_day.npy", np.array(rows_day, dtype=np.int64))
        np.save(out / f"{name}_val.npy", np.array(rows_val, dtype=dtype))

    save_series("rating", lambda h: h.rating_series)
    save_series("value", lambda h: h.value_series)
    save_series("club", lambda h: h.club_series, dtype=np.int64)
    save_series("contract", lambda h: [(d, e.toordinal()) for d, e in h.contract_series],
                dtype=np.int64)
    save_series("strength", lambda h: h.league_strength_series)

    meta = {
        "config": bundle.config.to_dict(),
        "start_month": bundle.start_month,
        "n_months": bundle.n_months,
        "club_tier": {str(k): v for k, v in sorted(bundle.club_tier.items())},
        "league_strength": {str(k): v for k, v in sorted(bundle.league_strength.items())},
    }
    with open(out / "bundle.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(in_dir: str | Path) -> HistoryBundle:
    src = Path(in_dir)
    with open(src / "bundle.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    cfg = SimConfig.from_dict(meta["config"])
    players: dict[int, PlayerHistory] = {}
    prof = np.load(src / "profiles.npy")
    for pid, bday, nat, pos in prof:
        profile = PlayerProfile(int(pid), date.fromordinal(int(bday)), int(nat), int(pos))
        players[int(pid)] = PlayerHistory(profile=profile)
    apps = np.load(src / "appearances.npy")
    for row in apps:
        pid = int(row[0])
        players[pid].appearances.append(MatchAppearance(
            int(row[1]), date.fromordinal(int(row[2])), int(row[3]), int(row[4]),
            int(row[5]), int(row[6]), int(row[7])))

    def load_series(name, setter, conv=float):
        s_pid = np.load(src / f"{name}_pid.npy")
        s_day = np.load(src / f"{name}_day.npy")
        s_val = np.load(src / f"{name}_val.npy")
        for pid, day, val in zip(s_pid, s_day, s_val):
            setter(players[int(pid)], date.fromordinal(int(day)), conv(val))

    load_series("rating", lambda h, d, v: h.rating_series.append((d, v)))
    load_series("value", lambda h, d, v: h.value_series.append((d, v)))
    load_series("club", lambda h, d, v: h.club_series.append((d, v)), conv=int)
    load_series("contract",
                lambda h, d, v: h.contract_series.append((d, date.fromordinal(v))), conv=int)
    load_series("strength", lambda h, d, v: h.league_strength_series.append((d, v)))

    return HistoryBundle(
        players=players,
        club_tier={int(k): v for k, v in meta["club_tier"].items()},
        league_strength={int(k): v for k, v in meta["league_strength"].items()},
        matches=[],
        config=cfg,
        start_month=meta["start_month"],
        n_months=meta["n_months"],
    )
