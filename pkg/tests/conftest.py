import numpy as np

from scoutcast.core import CONTINUOUS, Dataset, FeatureSchema


def dataset_from_arrays(X, y, names=None, kinds=None, indicator_kind="quality",
                        years=None, player_id=None, ages=None, current=None):
    """Wrap plain arrays in a Dataset with synthetic metadata."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if names is None:
        names = tuple(f"x{j}" for j in range(p))
    if kinds is None:
        kinds = tuple(CONTINUOUS for _ in range(p))
    if years is None:
        years = np.full(n, 2018)
    months = (np.arange(n) % 12) + 1
    dates = np.array([f"{y_}-{m:02d}-01" for y_, m in zip(years, months)],
                     dtype="datetime64[D]")
    return Dataset(
        schema=FeatureSchema(tuple(names), tuple(kinds)),
        X=X.copy(),
        y=y.copy(),
        player_id=(np.arange(n) if player_id is None else np.asarray(player_id)).astype(np.int64),
        snapshot_date=dates,
        age_years=np.full(n, 25.0) if ages is None else np.asarray(ages, dtype=float),
        current_indicator=np.zeros(n) if current is None else np.asarray(current, dtype=float),
        indicator_kind=indicator_kind,
    )
