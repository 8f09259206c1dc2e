"""Prediction uncertainty: OLS t-intervals, jackknife-after-bootstrap forest
variance, and kNN neighbor-range intervals, plus a coverage evaluator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .core import DataError
from .knn import NeighborIndex, predict_knn, query_neighbors
from .linear import LinearFit
from .trees import ForestModel, predict_tree

OLS_T = "ols_t"
FOREST_JACKKNIFE = "forest_jackknife"
KNN_RANGE = "knn_range"


@dataclass(frozen=True)
class PredictionInterval:
    point: float
    lower: float
    upper: float
    method: str
    nominal_level: float

    def __post_init__(self):
        if not 0.0 <= self.nominal_level < 1.0:
            raise DataError("nominal_level must lie in [0, 1)")
        if self.lower > self.upper:
            raise DataError("interval bounds are inverted")

    @property
    def width(self) -> float:
        return self.upper - self.lower


def ols_interval(fit: LinearFit, x0: np.ndarray, level: float) -> PredictionInterval:
    """Classical prediction interval: y_hat +- t * s * sqrt(1 + x0' (X'X)^-1 x0)."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (len(fit.feature_names),):
        raise DataError(f"x0 must have {len(fit.feature_names)} features")
    if fit.coef_covariance is None:
        raise DataError("fit has no coefficient covariance (not an OLS fit)")
    a = np.concatenate([[1.0], x0])
    point = float(a[1:] @ fit.coef + fit.intercept)
    s = math.sqrt(fit.residual_variance)
    # coef_covariance = s^2 (X'X)^-1, so the leverage divides s^2 back out
    leverage = float(a @ fit.coef_covariance @ a) / fit.residual_variance
    t = stats.t.ppf(0.5 + level / 2.0, df=fit.n - fit.p)
    half = t * s * math.sqrt(1.0 + leverage)
    return PredictionInterval(point, point - half, point + half, OLS_T, level)


def forest_jackknife_variance(model: ForestModel, x0: np.ndarray,
                              return_raw: bool = False):
    """Jackknife-after-bootstrap variance of a bagged prediction.

    V_J = ((n-1)/n) * sum_i (mean over trees excluding i - overall mean)^2,
    minus the finite-B Monte Carlo correction (e-1) * n/B * var(tree preds),
    clamped at zero. Accepts a single point or a batch of query points.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    single = x0.shape[0] == 1
    counts = model.inclusion_counts
    B, n = counts.shape
    excluded = counts == 0  # (B, n)
    trees_excluding = excluded.sum(axis=0)
    if (trees_excluding == 0).any():
        bad = int((trees_excluding == 0).sum())
        raise DataError(
            f"{bad} training points appear in every bootstrap sample; "
            "grow more trees (larger B) for the jackknife-after-bootstrap")
    preds = np.stack([predict_tree(t, x0) for t in model.trees])  # (B, q)
    mean_all = preds.mean(axis=0)
    # mean over trees that exclude i, for each i: (n, q)
    sums = excluded.T.astype(float) @ preds
    mean_excl = sums / trees_excluding[:, None]
    vj = (n - 1) / n * ((mean_excl - mean_all[None, :]) ** 2).sum(axis=0)
    tree_var = preds.var(axis=0)
    raw = vj - (math.e - 1.0) * (n / B) * tree_var
    clamped = np.maximum(raw, 0.0)
    if single:
        clamped, raw = float(clamped[0]), float(raw[0])
    return (clamped, raw) if return_raw else clamped


def forest_interval(model: ForestModel, x0: np.ndarray, level: float) -> PredictionInterval:
    """Normal approximation around the forest mean using the jackknife sigma."""
    x0 = np.asarray(x0, dtype=float)
    point = float(np.mean([predict_tree(t, np.atleast_2d(x0))[0] for t in model.trees]))
    sigma = math.sqrt(float(forest_jackknife_variance(model, x0)))
    z = stats.norm.ppf(0.5 + level / 2.0)
    return PredictionInterval(point, point - z * sigma, point + z * sigma,
                              FOREST_JACKKNIFE, level)


def knn_range_interval(index: NeighborIndex, x0: np.ndarray, k: int,
                       mode: str = "reciprocal", level: float = 0.95) -> PredictionInterval:
    """Interval spanned by the neighbor labels; point is the weighted mean."""
    if k < 2:
        raise DataError("neighbor-range intervals need k >= 2")
    _, labels = query_neighbors(index, x0, k)
    point = predict_knn(index, x0, k, mode)
    return PredictionInterval(point, float(labels.min()), float(labels.max()),
                              KNN_RANGE, level)


def empirical_coverage(intervals: list[PredictionInterval], actuals: np.ndarray) -> float:
    actuals = np.asarray(actuals, dtype=float)
    if len(intervals) != len(actuals):
        raise DataError("intervals and actuals have different lengths")
    if len(actuals) == 0:
        raise DataError("empty coverage input")
    inside = sum(1 for iv, y in zip(intervals, actuals) if iv.lower <= y <= iv.upper)
    return inside / len(actuals)
