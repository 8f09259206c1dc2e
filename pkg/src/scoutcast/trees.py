"""Regression trees: single CART, bootstrapped forest, and second-order
regularized boosting, sharing one prefix-sum split search.

Split selection is reproducible across platforms: gains within a relative
tolerance of the best are ties, broken by lowest feature index, then
smallest threshold. Thresholds are midpoints between consecutive distinct
sorted values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DataError, Dataset

TIE_TOL = 1e-9
_NO_LIMIT = 1 << 30


@dataclass
class TreeNode:
    value: float
    n: int
    feature: int = -1
    threshold: float = float("nan")
    gain: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None


def _score(G, H, lam):
    return G * G / (H + lam)


def _pick_split(X, g, h, idx, feature_ids, lam, gamma, half, min_leaf, max_bins):
    """Two-stage tie rule: per-feature best (smallest threshold within
    tolerance), then lowest feature index within tolerance of the global max."""
    n = len(idx)
    if n < 2 * min_leaf:
        return None
    g_node = g[idx]
    h_node = h[idx]
    G = g_node.sum()
    H = h_node.sum()
    parent = _score(G, H, lam)
    per_feature = []
    for j in feature_ids:
        v = X[idx, j]
        # unstable sort is fine: gains only read cumsums at distinct-value
        # boundaries, which are invariant to the order within ties
        order = np.argsort(v)
        sv = v[order]
        cg = np.cumsum(g_node[order])[:-1]
        ch = np.cumsum(h_node[order])[:-1]
        pos = np.arange(1, n)
        valid = (sv[:-1] < sv[1:]) & (pos >= min_leaf) & (n - pos >= min_leaf)
        if max_bins and valid.sum() > max_bins:
            cand = np.flatnonzero(valid)
            keep = cand[np.unique(np.linspace(0, len(cand) - 1, max_bins).astype(int))]
            valid = np.zeros_like(valid)
            valid[keep] = True
        if not valid.any():
            continue
        gl, hl = cg[valid], ch[valid]
        vgains = half * (_score(gl, hl, lam) + _score(G - gl, H - hl, lam) - parent) - gamma
        fmax = float(vgains.max())
        tol = TIE_TOL * (abs(fmax) + 1.0)
        first = int(np.flatnonzero(vgains >= fmax - tol)[0])
        cut = int(np.flatnonzero(valid)[first])
        per_feature.append((int(j), 0.5 * (sv[cut] + sv[cut + 1]), fmax))
    if not per_feature:
        return None
    gmax = max(e[2] for e in per_feature)
    tol = TIE_TOL * (abs(gmax) + 1.0)
    for j, thr, gain in per_feature:  # feature_ids ascending -> lowest index wins
        if gain >= gmax - tol:
            return j, thr, gain
    return None


def _grow(X, g, h, idx, depth, *, max_depth, min_leaf, lam, gamma, half,
          leaf_sign, mtry, rng, max_bins):
    G = g[idx].sum()
    H = h[idx].sum()
    node = TreeNode(value=leaf_sign * G / (H + lam), n=len(idx))
    if depth >= max_depth or len(idx) < 2 * min_leaf:
        return node
    g_node = g[idx]
    if g_node.max() == g_node.min():  # pure node; avoids rounding-noise splits
        return node
    p = X.shape[1]
    if mtry is not None and mtry < p:
        feature_ids = np.sort(rng.choice(p, size=mtry, replace=False))
    else:
        feature_ids = np.arange(p)
    pick = _pick_split(X, g, h, idx, feature_ids, lam, gamma, half, min_leaf, max_bins)
    if pick is None or pick[2] <= 0.0:
        return node
    j, thr, gain = pick
    mask = X[idx, j] <= thr
    node.feature = j
    node.threshold = thr
    node.gain = gain
    node.left = _grow(X, g, h, idx[mask], depth + 1, max_depth=max_depth,
                      min_leaf=min_leaf, lam=lam, gamma=gamma, half=half,
                      leaf_sign=leaf_sign, mtry=mtry, rng=rng, max_bins=max_bins)
    node.right = _grow(X, g, h, idx[~mask], depth + 1, max_depth=max_depth,
                       min_leaf=min_leaf, lam=lam, gamma=gamma, half=half,
                       leaf_sign=leaf_sign, mtry=mtry, rng=rng, max_bins=max_bins)
    return node


def _fit_tree_arrays(X, y, max_depth=None, min_samples_leaf=1, mtry=None, rng=None):
    if len(y) == 0:
        raise DataError("cannot fit a tree on an empty dataset")
    return _grow(
        X, y, np.ones(len(y)), np.arange(len(y)), 0,
        max_depth=_NO_LIMIT if max_depth is None else max_depth,
        min_leaf=min_samples_leaf, lam=0.0, gamma=0.0, half=1.0,
        leaf_sign=1.0, mtry=mtry, rng=rng, max_bins=0,
    )


def fit_tree(train: Dataset, max_depth: int | None = None,
             min_samples_leaf: int = 1) -> TreeNode:
    """Greedy SSE-minimizing CART; leaves predict the mean label."""
    return _fit_tree_arrays(train.X, train.y, max_depth, min_samples_leaf)


def predict_tree(root: TreeNode, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    out = np.empty(len(X))
    stack = [(root, np.arange(len(X)))]
    while stack:
        node, rows = stack.pop()
        if len(rows) == 0:
            continue
        if node.is_leaf:
            out[rows] = node.value
            continue
        mask = X[rows, node.feature] <= node.threshold
        stack.append((node.left, rows[mask]))
        stack.append((node.right, rows[~mask]))
    return out


@dataclass
class ForestModel:
    trees: list[TreeNode]
    inclusion_counts: np.ndarray  # (B, n) bootstrap multiplicities
    mtry: int
    seed: int
    n_train: int
    feature_names: tuple[str, ...] = ()


def fit_forest(train: Dataset, n_trees: int, mtry: int | None = None,
               max_depth: int | None = None, min_samples_leaf: int = 1,
               seed: int = 0, bootstrap: bool = True) -> ForestModel:
    """Bagged CART trees with per-split feature subsampling."""
    if n_trees < 1:
        raise DataError("n_trees must be >= 1")
    X, y = train.X, train.y
    n, p = X.shape
    if mtry is None:
        mtry = int(np.ceil(p / 3))
    trees = []
    counts = np.zeros((n_trees, n), dtype=np.int32)
    for b in range(n_trees):
        rng = np.random.default_rng([seed, b])
        if bootstrap:
            sample = rng.integers(0, n, size=n)
            counts[b] = np.bincount(sample, minlength=n)
        else:
            sample = np.arange(n)
            counts[b] = 1
        trees.append(_fit_tree_arrays(X[sample], y[sample], max_depth,
                                      min_samples_leaf, mtry, rng))
    return ForestModel(trees, counts, mtry, seed, n, train.schema.names)


def predict_forest(model: ForestModel, X: np.ndarray) -> np.ndarray:
    preds = np.stack([predict_tree(t, X) for t in model.trees])
    return preds.mean(axis=0)


@dataclass
class GbtModel:
    base_score: float
    trees: list[TreeNode] = field(default_factory=list)
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    min_gain: float = 0.0
    rounds: int = 0
    feature_names: tuple[str, ...] = ()
    train_rmse_path: np.ndarray = field(default_factory=lambda: np.empty(0))


def fit_gbt(train: Dataset, rounds: int = 100, learning_rate: float = 0.1,
            reg_lambda: float = 1.0, min_gain: float = 0.0, max_depth: int = 3,
            subsample: float = 1.0, min_samples_leaf: int = 1, seed: int = 0,
            max_bins: int = 0) -> GbtModel:
    """Squared-error boosting with regularized leaf weights.

    Per round the gradients are pred - y (hessians are 1); leaf weight is
    -G/(H+lambda) and splits must beat the min_gain margin. ``max_bins`` > 0
    switches the split search to quantile-sketch candidates.
    """
    if not 0.0 < learning_rate <= 1.0:
        raise DataError("learning_rate must be in (0, 1]")
    X, y = train.X, train.y
    n = len(y)
    h = np.ones(n)
    pred = np.full(n, float(y.mean()))
    model = GbtModel(base_score=float(y.mean()), learning_rate=learning_rate,
                     reg_lambda=reg_lambda, min_gain=min_gain,
                     feature_names=train.schema.names)
    rng = np.random.default_rng([seed, 101])
    rmse_path = []
    for _ in range(rounds):
        grad = pred - y
        if subsample < 1.0:
            rows = rng.random(n) < subsample
            rows = np.flatnonzero(rows)
            if len(rows) == 0:
                rows = np.arange(n)
        else:
            rows = np.arange(n)
        tree = _grow(X, grad, h, rows, 0,
                     max_depth=max_depth, min_leaf=min_samples_leaf,
                     lam=reg_lambda, gamma=min_gain, half=0.5,
                     leaf_sign=-1.0, mtry=None, rng=rng, max_bins=max_bins)
        model.trees.append(tree)
        pred = pred + learning_rate * predict_tree(tree, X)
        rmse_path.append(float(np.sqrt(np.mean((pred - y) ** 2))))
    model.rounds = len(model.trees)
    model.train_rmse_path = np.array(rmse_path)
    return model


def predict_gbt(model: GbtModel, X: np.ndarray) -> np.ndarray:
    out = np.full(len(np.atleast_2d(X)), model.base_score)
    for tree in model.trees:
        out = out + model.learning_rate * predict_tree(tree, X)
    return out


def _accumulate_gains(node: TreeNode, imp: np.ndarray) -> None:
    if node.is_leaf:
        return
    imp[node.feature] += node.gain
    _accumulate_gains(node.left, imp)
    _accumulate_gains(node.right, imp)


def impurity_importances(model, n_features: int) -> np.ndarray:
    """Total split gain per feature; unused features get 0.

    Forest importance is the mean of per-tree importances; tree and GBT
    importances are plain sums.
    """
    if isinstance(model, TreeNode):
        imp = np.zeros(n_features)
        _accumulate_gains(model, imp)
        return imp
    if isinstance(model, ForestModel):
        per_tree = np.zeros((len(model.trees), n_features))
        for i, t in enumerate(model.trees):
            _accumulate_gains(t, per_tree[i])
        return per_tree.mean(axis=0)
    if isinstance(model, GbtModel):
        imp = np.zeros(n_features)
        for t in model.trees:
            _accumulate_gains(t, imp)
        return imp
    raise DataError(f"unsupported model type: {type(model).__name__}")


_NOISE_PREFIX = "_noise_"


def select_by_noise(train: Dataset, model_kind: str, n_noise_continuous: int = 3,
                    n_noise_discrete: int = 3, seed: int = 0,
                    params: dict | None = None) -> list[str]:
    """Keep features that out-rank injected noise columns of the same kind."""
    if n_noise_continuous < 1 or n_noise_discrete < 1:
        raise DataError("need at least one noise column of each kind")
    from .core import CONTINUOUS, DISCRETE, FeatureSchema

    rng = np.random.default_rng([seed, 202])
    n = len(train)
    cont = rng.normal(0.0, 1.0, size=(n, n_noise_continuous))
    disc = rng.integers(0, 10, size=(n, n_noise_discrete)).astype(float)
    names = list(train.schema.names)
    kinds = list(train.schema.kinds)
    for i in range(n_noise_continuous):
        names.append(f"{_NOISE_PREFIX}c{i}")
        kinds.append(CONTINUOUS)
    for i in range(n_noise_discrete):
        names.append(f"{_NOISE_PREFIX}d{i}")
        kinds.append(DISCRETE)
    aug = Dataset(
        schema=FeatureSchema(tuple(names), tuple(kinds)),
        X=np.hstack([train.X, cont, disc]),
        y=train.y.copy(),
        player_id=train.player_id.copy(),
        snapshot_date=train.snapshot_date.copy(),
        age_years=train.age_years.copy(),
        current_indicator=train.current_indicator.copy(),
        indicator_kind=train.indicator_kind,
    )
    params = dict(params or {})
    if model_kind == "tree":
        model = fit_tree(aug, params.get("max_depth", 8),
                         params.get("min_samples_leaf", 20))
    elif model_kind == "forest":
        model = fit_forest(aug, min(params.get("n_trees", 30), 20),
                           params.get("mtry"), params.get("max_depth", 8),
                           params.get("min_samples_leaf", 20), seed=seed)
    elif model_kind == "gbt":
        model = fit_gbt(aug, min(params.get("rounds", 50), 30),
                        params.get("learning_rate", 0.1),
                        params.get("reg_lambda", 1.0), params.get("min_gain", 0.0),
                        params.get("max_depth", 3),
                        params.get("subsample", 1.0), seed=seed)
    else:
        raise DataError(f"unknown tree model kind: {model_kind!r}")
    imp = impurity_importances(model, len(names))
    thresholds = {}
    for kind, tag in ((CONTINUOUS, "c"), (DISCRETE, "d")):
        noise_idx = [j for j, nm in enumerate(names) if nm.startswith(_NOISE_PREFIX + tag)]
        thresholds[kind] = imp[noise_idx].max()
    selected = [
        nm for j, (nm, kind) in enumerate(zip(train.schema.names, train.schema.kinds))
        if imp[j] > thresholds[kind]
    ]
    return selected
