"""Linear regressors: OLS with p-value backward selection, lasso via cyclic
coordinate descent, and a random-intercept mixed-effects model fit by EM."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .core import DataError, Dataset

LASSO_TOL = 1e-7
LASSO_MAX_SWEEPS = 10_000
LME_TOL = 1e-8


@dataclass
class LinearFit:
    feature_names: tuple[str, ...]
    coef: np.ndarray              # original units, one per feature
    intercept: float
    residual_variance: float      # s^2 = RSS / (n - p)
    n: int
    p: int                        # len(feature_names) + 1 (intercept)
    rss: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    coef_covariance: np.ndarray | None = None   # [intercept, features] order
    p_values: np.ndarray | None = None          # per feature, intercept excluded
    intercept_only: bool = False
    dropped: tuple[str, ...] = ()
    kind: str = "ols"
    objective_path: np.ndarray | None = None
    max_kkt_violation: float | None = None

    def standardized_importances(self) -> np.ndarray:
        """|coefficient after feature standardization|, the linear importance."""
        return np.abs(self.coef * self.feature_stds)


def _design(X: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((X.shape[0], 1)), X])


def _check_rank(X: np.ndarray, names: tuple[str, ...]) -> None:
    if X.shape[1] == 0:
        return
    std = X.std(axis=0)
    flat = [names[j] for j in np.flatnonzero(std == 0)]
    if flat:
        raise DataError(f"constant (collinear with intercept) columns: {flat}")
    Z = (X - X.mean(axis=0)) / std
    _, r, piv = linalg.qr(Z, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    tol = d[0] * max(Z.shape) * np.finfo(float).eps * 1e3 if d[0] > 0 else 0.0
    rank = int((d > tol).sum())
    if rank < Z.shape[1]:
        bad = [names[j] for j in sorted(piv[rank:])]
        raise DataError(f"design matrix is rank deficient; collinear columns: {bad}")


def _ols_arrays(X: np.ndarray, y: np.ndarray, names: tuple[str, ...]) -> LinearFit:
    n, k = X.shape
    p = k + 1
    if n <= p:
        raise DataError(f"need n > p for OLS (n={n}, p={p})")
    _check_rank(X, names)
    A = _design(X)
    beta, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ beta
    rss = float(resid @ resid)
    s2 = rss / (n - p)
    cov = s2 * np.linalg.inv(A.T @ A)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.sqrt(np.diag(cov))
        t = np.where(se > 0, beta / se, np.inf * np.sign(beta))
    pv = 2.0 * stats.t.sf(np.abs(t[1:]), df=n - p) if k else np.empty(0)
    return LinearFit(
        feature_names=names,
        coef=beta[1:],
        intercept=float(beta[0]),
        residual_variance=s2,
        n=n,
        p=p,
        rss=rss,
        feature_means=X.mean(axis=0) if k else np.empty(0),
        feature_stds=X.std(axis=0) if k else np.empty(0),
        coef_covariance=cov,
        p_values=pv,
        intercept_only=(k == 0),
    )


def fit_ols(train: Dataset) -> LinearFit:
    return _ols_arrays(train.X, train.y, train.schema.names)


def backward_select(train: Dataset, p_threshold: float) -> LinearFit:
    """Backwards selection: refit and drop the worst p-value while any exceeds
    the threshold. The intercept is never dropped."""
    if not 0.0 < p_threshold < 1.0:
        raise DataError("p_threshold must be in (0, 1)")
    current = list(train.schema.names)
    dropped: list[str] = []
    while True:
        try:
            if current:
                _check_rank(train.select_features(current).X, tuple(current))
            break
        except DataError as exc:
            # shed exactly-collinear columns (keep-first) before selecting on p
            named = [nm for nm in current if f"'{nm}'" in str(exc)]
            if not named:
                raise
            dropped.extend(named)
            current = [nm for nm in current if nm not in named]
    while True:
        if not current:
            fit = _ols_arrays(np.empty((len(train), 0)), train.y, ())
            fit.dropped = tuple(dropped)
            return fit
        sub = train.select_features(current)
        fit = _ols_arrays(sub.X, sub.y, tuple(current))
        worst = int(np.argmax(fit.p_values))
        if fit.p_values[worst] > p_threshold:
            dropped.append(current.pop(worst))
            continue
        fit.dropped = tuple(dropped)
        return fit


def soft_threshold(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def lasso_max_lambda(X: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty that zeroes every slope (standardized features)."""
    std = X.std(axis=0)
    Z = np.where(std > 0, (X - X.mean(axis=0)) / np.where(std > 0, std, 1.0), 0.0)
    yc = y - y.mean()
    return float(np.max(np.abs(Z.T @ yc)) / len(y))


def fit_lasso(train: Dataset, lam: float, tol: float = LASSO_TOL,
              max_sweeps: int = LASSO_MAX_SWEEPS) -> LinearFit:
    """Cyclic coordinate descent on (1/2n)*RSS + lam*sum|beta|.

    Features are standardized internally; the intercept is unpenalized.
    """
    if lam < 0:
        raise DataError("lasso penalty must be >= 0")
    X, y = train.X, train.y
    n, k = X.shape
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    live = std > 0
    Z = np.where(live, (X - mean) / np.where(live, std, 1.0), 0.0)
    ybar = float(y.mean())
    yc = y - ybar
    beta = np.zeros(k)
    r = yc.copy()
    objective = []
    for _ in range(max_sweeps):
        max_delta = 0.0
        for j in range(k):
            if not live[j]:
                continue
            zj = Z[:, j]
            old = beta[j]
            rho = (zj @ r) / n + old  # z_j'z_j = n after standardization
            new = soft_threshold(rho, lam)
            if new != old:
                r -= (new - old) * zj
                max_delta = max(max_delta, abs(new - old))
            beta[j] = new
        objective.append(0.5 * float(r @ r) / n + lam * float(np.abs(beta).sum()))
        if max_delta < tol:
            break
    grad = Z.T @ r / n
    viol = np.where(beta != 0, np.abs(grad - lam * np.sign(beta)),
                    np.maximum(np.abs(grad) - lam, 0.0))
    coef = np.where(live, beta / np.where(live, std, 1.0), 0.0)
    intercept = ybar - float(coef @ mean)
    rss = float(r @ r)
    selected = tuple(nm for nm, b in zip(train.schema.names, beta) if b != 0.0)
    return LinearFit(
        feature_names=train.schema.names,
        coef=coef,
        intercept=intercept,
        residual_variance=rss / max(n - k - 1, 1),
        n=n,
        p=k + 1,
        rss=rss,
        feature_means=mean,
        feature_stds=std,
        kind="lasso",
        objective_path=np.array(objective),
        max_kkt_violation=float(viol.max()) if k else 0.0,
        dropped=tuple(nm for nm in train.schema.names if nm not in selected),
    )


def lasso_selected(fit: LinearFit) -> tuple[str, ...]:
    return tuple(nm for nm, c in zip(fit.feature_names, fit.coef) if c != 0.0)


@dataclass
class LmeFit:
    feature_names: tuple[str, ...]
    coef: np.ndarray
    intercept: float
    group_key: str
    random_intercepts: dict[int, float]
    sigma2: float
    tau2: float
    n: int
    n_groups: int
    loglik_path: np.ndarray = field(default_factory=lambda: np.empty(0))
    converged: bool = False

    def predict(self, X: np.ndarray, groups: np.ndarray | None = None) -> np.ndarray:
        out = X @ self.coef + self.intercept
        if groups is not None:
            out = out + np.array([self.random_intercepts.get(int(g), 0.0) for g in groups])
        return out


def _lme_loglik(sq_sums, sums, counts, sigma2, tau2):
    denom = sigma2 + counts * tau2
    quad = (sq_sums - tau2 * sums**2 / denom) / sigma2
    logdet = (counts - 1) * np.log(sigma2) + np.log(denom)
    return -0.5 * float(np.sum(counts * np.log(2 * np.pi) + logdet + quad))


def fit_lme(train: Dataset, group_feature: str = "nationality", max_features: int = 20,
            lasso_lambda: float | None = None, tol: float = LME_TOL, max_iter: int = 500,
            fix_tau2: float | None = None) -> LmeFit:
    """Random-intercept model: GLS for the fixed effects, EM for the variances.

    Fixed effects are the strongest `max_features` features ranked by lasso
    importance (standardized |coefficient|), excluding the group column.
    """
    codes = train.feature(group_feature).astype(np.int64)
    uniq, group_idx = np.unique(codes, return_inverse=True)
    if len(uniq) < 2:
        raise DataError("only one group present; use fit_ols instead")

    candidates = [nm for nm in train.schema.names if nm != group_feature]
    sub = train.select_features(candidates)
    lam = 0.01 * lasso_max_lambda(sub.X, train.y) if lasso_lambda is None else lasso_lambda
    lasso_fit = fit_lasso(sub, lam)
    importance = lasso_fit.standardized_importances()
    ranked = [candidates[j] for j in np.argsort(-importance, kind="stable") if importance[j] > 0]
    selected = ranked[:max_features] or candidates[:max_features]

    X = _design(train.select_features(selected).X)
    y = train.y
    n, p = X.shape
    G = len(uniq)
    counts = np.bincount(group_idx, minlength=G).astype(float)

    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    sigma2 = float(resid @ resid) / n
    tau2 = sigma2 / 2 if fix_tau2 is None else fix_tau2

    Xg = np.zeros((G, p))
    np.add.at(Xg, group_idx, X)
    XtX = X.T @ X
    Xty = X.T @ y
    yg = np.bincount(group_idx, weights=y, minlength=G)

    path = []
    converged = False
    b_hat = np.zeros(G)
    for _ in range(max_iter):
        w = tau2 / (sigma2 + counts * tau2) if tau2 > 0 else np.zeros(G)
        lhs = XtX - Xg.T @ (Xg * w[:, None])
        rhs = Xty - Xg.T @ (w * yg)
        beta = np.linalg.solve(lhs, rhs)
        resid = y - X @ beta
        rg = np.bincount(group_idx, weights=resid, minlength=G)
        denom = sigma2 + counts * tau2
        b_hat = tau2 * rg / denom
        v_g = tau2 * sigma2 / denom
        sq = float(np.sum((resid - b_hat[group_idx]) ** 2))
        new_sigma2 = (sq + float(counts @ v_g)) / n
        new_tau2 = float(np.mean(b_hat**2 + v_g)) if fix_tau2 is None else fix_tau2
        rg_sq = np.bincount(group_idx, weights=resid**2, minlength=G)
        ll = _lme_loglik(rg_sq, rg, counts, sigma2, tau2)
        if path and abs(ll - path[-1]) < tol:
            path.append(ll)
            converged = True
            break
        path.append(ll)
        sigma2, tau2 = new_sigma2, max(new_tau2, 0.0)

    return LmeFit(
        feature_names=tuple(selected),
        coef=beta[1:],
        intercept=float(beta[0]),
        group_key=group_feature,
        random_intercepts={int(g): float(b) for g, b in zip(uniq, b_hat)},
        sigma2=sigma2,
        tau2=tau2,
        n=n,
        n_groups=G,
        loglik_path=np.array(path),
        converged=converged,
    )


def predict_linear(fit: LinearFit, x: np.ndarray) -> float | np.ndarray:
    """Dot product plus intercept; validates the feature count."""
    x = np.asarray(x, dtype=float)
    k = len(fit.feature_names)
    if x.shape[-1] != k:
        raise DataError(f"expected {k} features, got {x.shape[-1]}")
    return x @ fit.coef + fit.intercept


def predict_on_dataset(fit: LinearFit | LmeFit, ds: Dataset) -> np.ndarray:
    """Align the dataset columns to the fit's features by name, then predict."""
    cols = [ds.schema.index(nm) for nm in fit.feature_names]
    X = ds.X[:, cols]
    if isinstance(fit, LmeFit):
        return fit.predict(X, ds.feature(fit.group_key).astype(np.int64))
    return predict_linear(fit, X)
