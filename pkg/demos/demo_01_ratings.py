"""Rating engine walkthrough: team strength, expectations, updates, penalties.

Run: python3 demos/demo_01_ratings.py
"""

from datetime import date

from scoutcast.ratings import (
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

cfg = RatingConfig(initial_rating=80.0, logistic_scale=12.0, k_factor=4.0)

print("== team strength is a minutes-weighted average ==")
lineup = [(RatingState(1, 92.0), 90), (RatingState(2, 74.0), 45)]
print(f"ratings 92 (90') and 74 (45') -> team {team_rating(lineup):.2f}")

print("\n== expected score is a fixed logistic of the rating gap ==")
for gap in (0, 6, 12, 24):
    e = expected_score(80.0 + gap, 80.0, cfg)
    print(f"gap {gap:+3d} -> expected home score {e:.3f}")

print("\n== after a match, everyone moves by K*(S-E) scaled by minutes ==")
home = [(RatingState(1, 86.0), 90), (RatingState(2, 86.0), 45)]
away = [(RatingState(3, 80.0), 90), (RatingState(4, 80.0), 45)]
new_home, new_away = update_after_match(home, away, HOME_WIN, cfg)
for old, new in zip(home + away, new_home + new_away):
    print(f"player {new.player_id}: {old[0].rating:.2f} -> {new.rating:.2f} "
          f"({old[1]} minutes)")

print("\n== inactivity penalty, applied once at the next appearance ==")
idle = RatingState(9, 85.0, last_match_date=date(2020, 1, 10))
back = apply_inactivity_penalty(idle, date(2020, 9, 15), cfg)
print(f"8 months out, grace {cfg.inactivity_grace_months}: "
      f"{idle.rating:.1f} -> {back.rating:.1f}")

print("\n== replaying a small fixture list ==")
matches = [
    Match(0, date(2020, 1, 4), 0, 1, ((1, 90), (2, 90)), ((3, 90), (4, 90)), HOME_WIN),
    Match(1, date(2020, 1, 11), 1, 0, ((3, 90), (4, 90)), ((1, 90), (2, 90)), HOME_WIN),
]
history = run_league_history(matches, cfg)
for pid, series in sorted(history.series.items()):
    path = " -> ".join(f"{r:.2f}" for _, r in series)
    print(f"player {pid}: {cfg.initial_rating:.0f} -> {path}")
