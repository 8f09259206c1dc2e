"""Model selection: expanding-window time-series CV and sequential
model-based hyperparameter search with a regression-forest surrogate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import DataError, Dataset
from .trees import _fit_tree_arrays, predict_tree


@dataclass(frozen=True)
class Fold:
    fit_years: tuple[int, ...]
    validate_year: int


def expanding_window_splits(train: Dataset) -> list[Fold]:
    """Fold j fits on the first j years and validates on year j+1."""
    years = sorted(set(train.years().tolist()))
    if len(years) < 2:
        raise DataError("expanding-window CV needs at least 2 distinct years")
    return [Fold(tuple(years[: j + 1]), years[j + 1]) for j in range(len(years) - 1)]


def fold_indices(train: Dataset, fold: Fold) -> tuple[np.ndarray, np.ndarray]:
    years = train.years()
    fit_mask = np.isin(years, fold.fit_years)
    val_mask = years == fold.validate_year
    return np.flatnonzero(fit_mask), np.flatnonzero(val_mask)


def assert_no_leakage(train: Dataset, fold: Fold) -> None:
    """Max fit date strictly precedes min validation date."""
    fit_idx, val_idx = fold_indices(train, fold)
    if len(fit_idx) == 0 or len(val_idx) == 0:
        raise DataError(f"fold {fold} selects an empty side")
    if train.snapshot_date[fit_idx].max() >= train.snapshot_date[val_idx].min():
        raise DataError(f"temporal leakage in fold {fold}")


# -- hyperparameter domains -------------------------------------------------

@dataclass(frozen=True)
class Real:
    lo: float
    hi: float
    log: bool = False

    def __post_init__(self):
        if self.hi <= self.lo:
            raise DataError("empty real domain")
        if self.log and self.lo <= 0:
            raise DataError("log-scale bounds must be positive")

    def sample(self, rng: np.random.Generator) -> float:
        if self.log:
            return float(10 ** rng.uniform(math.log10(self.lo), math.log10(self.hi)))
        return float(rng.uniform(self.lo, self.hi))

    def encode(self, v: float) -> float:
        return math.log10(v) if self.log else float(v)


@dataclass(frozen=True)
class Integer:
    lo: int
    hi: int

    def __post_init__(self):
        if self.hi < self.lo:
            raise DataError("empty integer domain")

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.lo, self.hi + 1))

    def encode(self, v: int) -> float:
        return float(v)


@dataclass(frozen=True)
class Categorical:
    options: tuple

    def __post_init__(self):
        if not self.options:
            raise DataError("empty categorical domain")

    def sample(self, rng: np.random.Generator):
        return self.options[int(rng.integers(len(self.options)))]

    def encode(self, v) -> float:
        return float(self.options.index(v))


HyperSpace = dict[str, Real | Integer | Categorical]


def sample_config(space: HyperSpace, rng: np.random.Generator) -> dict:
    return {name: dom.sample(rng) for name, dom in space.items()}


def encode_config(space: HyperSpace, config: dict) -> np.ndarray:
    return np.array([dom.encode(config[name]) for name, dom in space.items()])


@dataclass
class TuneTrace:
    entries: list[tuple[dict, float]] = field(default_factory=list)
    best_config: dict | None = None
    best_loss: float = math.inf
    seed: int = 0
    budget: int = 0

    def record(self, config: dict, loss: float) -> None:
        self.entries.append((config, loss))
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_config = config

    def incumbent_path(self) -> np.ndarray:
        out = np.empty(len(self.entries))
        best = math.inf
        for i, (_, loss) in enumerate(self.entries):
            best = min(best, loss)
            out[i] = best
        return out

    def to_dict(self) -> dict:
        return {
            "entries": [{"config": c, "loss": loss} for c, loss in self.entries],
            "best_config": self.best_config,
            "best_loss": self.best_loss,
            "seed": self.seed,
            "budget": self.budget,
        }


def _surrogate_mean_std(trees: list, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    preds = np.stack([predict_tree(t, X) for t in trees])
    return preds.mean(axis=0), preds.std(axis=0)


def _expected_improvement(mean: np.ndarray, std: np.ndarray, best: float) -> np.ndarray:
    imp = best - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, imp / std, 0.0)
    ei = np.where(std > 0, imp * stats.norm.cdf(z) + std * stats.norm.pdf(z),
                  np.maximum(imp, 0.0))
    return ei


def smbo_tune(space: HyperSpace, objective, budget: int, n_init: int,
              seed: int = 0, n_candidates: int = 500,
              surrogate_trees: int = 40) -> TuneTrace:
    """Sequential model-based optimization of a loss over a hyperspace.

    The first n_init configs are uniform (log-aware) samples; afterwards a
    small regression forest fit on the evaluated (config, loss) pairs scores
    candidate samples by expected improvement over the incumbent.
    """
    if not budget >= n_init >= 2:
        raise DataError("need budget >= n_init >= 2")
    rng = np.random.default_rng(seed)
    trace = TuneTrace(seed=seed, budget=budget)
    evaluated_X: list[np.ndarray] = []
    evaluated_y: list[float] = []

    def run(config: dict) -> None:
        loss = objective(config)
        loss = float(loss) if np.isfinite(loss) else math.inf
        trace.record(config, loss)
        if math.isfinite(loss):
            evaluated_X.append(encode_config(space, config))
            evaluated_y.append(loss)

    for _ in range(n_init):
        run(sample_config(space, rng))

    for _ in range(budget - n_init):
        if len(evaluated_y) < 2:
            run(sample_config(space, rng))
            continue
        X = np.stack(evaluated_X)
        y = np.array(evaluated_y)
        trees = []
        for b in range(surrogate_trees):
            t_rng = np.random.default_rng([seed, 17, b, len(evaluated_y)])
            rows = t_rng.integers(0, len(y), size=len(y))
            trees.append(_fit_tree_arrays(X[rows], y[rows], max_depth=8,
                                          min_samples_leaf=1,
                                          mtry=max(1, X.shape[1] // 2), rng=t_rng))
        candidates = [sample_config(space, rng) for _ in range(n_candidates)]
        enc = np.stack([encode_config(space, c) for c in candidates])
        mean, std = _surrogate_mean_std(trees, enc)
        ei = _expected_improvement(mean, std, trace.best_loss)
        run(candidates[int(np.argmax(ei))])

    assert len(trace.entries) == budget
    return trace


def cv_rmse_objective(train: Dataset, fit_predict) -> float:
    """Mean RMSE across expanding-window folds; fit_predict(train, val) -> preds."""
    folds = expanding_window_splits(train)
    losses = []
    for fold in folds:
        assert_no_leakage(train, fold)
        fit_idx, val_idx = fold_indices(train, fold)
        fit_ds = train.subset(fit_idx)
        val_ds = train.subset(val_idx)
        pred = fit_predict(fit_ds, val_ds)
        losses.append(float(np.sqrt(np.mean((pred - val_ds.y) ** 2))))
    return float(np.mean(losses))
