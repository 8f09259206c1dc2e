import numpy as np
import pytest

from conftest import dataset_from_arrays
from scoutcast.core import CONTINUOUS, DISCRETE, DataError
from scoutcast.trees import (
    TIE_TOL,
    TreeNode,
    fit_forest,
    fit_gbt,
    fit_tree,
    impurity_importances,
    predict_forest,
    predict_gbt,
    predict_tree,
    select_by_noise,
)


# -- independent brute-force oracle -----------------------------------------

def brute_force_tree(X, y, max_depth, min_leaf, depth=0):
    """Exhaustive split enumeration with the same documented tie rule."""
    node = TreeNode(value=float(y.mean()), n=len(y))
    if depth >= max_depth or len(y) < 2 * min_leaf or np.all(y == y[0]):
        return node
    n = len(y)
    parent_sse = float(((y - y.mean()) ** 2).sum())
    per_feature = []
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        best = None
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (lo + hi)
            mask = X[:, j] <= thr
            nl = int(mask.sum())
            if nl < min_leaf or n - nl < min_leaf:
                continue
            sse = float(((y[mask] - y[mask].mean()) ** 2).sum())
            sse += float(((y[~mask] - y[~mask].mean()) ** 2).sum())
            gain = parent_sse - sse
            if best is None or gain > best[1] + TIE_TOL * (abs(best[1]) + 1.0):
                best = (thr, gain)
        if best is not None:
            per_feature.append((j, best[0], best[1]))
    if not per_feature:
        return node
    gmax = max(e[2] for e in per_feature)
    tol = TIE_TOL * (abs(gmax) + 1.0)
    j, thr, gain = next(e for e in per_feature if e[2] >= gmax - tol)
    if gain <= 0:
        return node
    mask = X[:, j] <= thr
    node.feature = j
    node.threshold = thr
    node.gain = gain
    node.left = brute_force_tree(X[mask], y[mask], max_depth, min_leaf, depth + 1)
    node.right = brute_force_tree(X[~mask], y[~mask], max_depth, min_leaf, depth + 1)
    return node


def same_structure(a: TreeNode, b: TreeNode) -> bool:
    if a.is_leaf != b.is_leaf:
        return False
    if a.is_leaf:
        return a.n == b.n and abs(a.value - b.value) < 1e-9
    return (a.feature == b.feature and abs(a.threshold - b.threshold) < 1e-12
            and same_structure(a.left, b.left) and same_structure(a.right, b.right))


def split_sequence(node: TreeNode, out=None):
    if out is None:
        out = []
    if not node.is_leaf:
        out.append(node.feature)
        split_sequence(node.left, out)
        split_sequence(node.right, out)
    return out


class TestFitTree:
    def test_constant_labels_single_leaf(self):
        X = np.random.default_rng(0).normal(size=(20, 3))
        root = fit_tree(dataset_from_arrays(X, np.full(20, 7.5)))
        assert root.is_leaf
        assert root.value == 7.5

    def test_step_function_split(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0.0, 0.0, 10.0, 10.0])
        root = fit_tree(dataset_from_arrays(X, y))
        assert not root.is_leaf
        assert 1.0 < root.threshold < 2.0
        assert root.left.value == 0.0
        assert root.right.value == 10.0

    def test_min_samples_leaf_forces_single_leaf(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(15, 2))
        y = rng.normal(size=15)
        root = fit_tree(dataset_from_arrays(X, y), min_samples_leaf=15)
        assert root.is_leaf
        assert root.value == pytest.approx(y.mean())

    @pytest.mark.parametrize("n,p,seed", [(5, 1, 0), (30, 3, 1), (60, 5, 2),
                                          (200, 5, 3), (47, 2, 4)])
    def test_matches_brute_force(self, n, p, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, p))
        y = rng.normal(size=n)
        fast = fit_tree(dataset_from_arrays(X, y), max_depth=4, min_samples_leaf=2)
        slow = brute_force_tree(X, y, max_depth=4, min_leaf=2)
        assert same_structure(fast, slow)

    def test_matches_brute_force_with_duplicates(self):
        rng = np.random.default_rng(5)
        X = rng.integers(0, 4, size=(80, 3)).astype(float)  # heavy ties
        y = rng.normal(size=80)
        fast = fit_tree(dataset_from_arrays(X, y), max_depth=3, min_samples_leaf=3)
        slow = brute_force_tree(X, y, max_depth=3, min_leaf=3)
        assert same_structure(fast, slow)

    def test_interpolates_unique_rows(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(40, 2))
        y = rng.normal(size=40)
        root = fit_tree(dataset_from_arrays(X, y))
        assert np.allclose(predict_tree(root, X), y)

    def test_monotone_transform_same_structure(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(100, 3))
        y = X[:, 0] * 2 + np.sin(X[:, 1]) + 0.1 * rng.normal(size=100)
        root_a = fit_tree(dataset_from_arrays(X, y), max_depth=4, min_samples_leaf=5)
        X2 = X.copy()
        X2[:, 1] = 2.0 * X2[:, 1] + 7.0
        root_b = fit_tree(dataset_from_arrays(X2, y), max_depth=4, min_samples_leaf=5)
        assert split_sequence(root_a) == split_sequence(root_b)

    def test_empty_dataset_rejected(self):
        with pytest.raises(DataError):
            fit_tree(dataset_from_arrays(np.empty((0, 2)), np.empty(0)))


class TestForest:
    def test_degenerate_forest_equals_tree(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(60, 3))
        y = rng.normal(size=60)
        ds = dataset_from_arrays(X, y)
        forest = fit_forest(ds, n_trees=1, mtry=3, max_depth=4,
                            min_samples_leaf=2, bootstrap=False)
        tree = fit_tree(ds, max_depth=4, min_samples_leaf=2)
        probe = rng.normal(size=(50, 3))
        assert np.array_equal(predict_forest(forest, probe), predict_tree(tree, probe))

    def test_prediction_is_mean_of_trees(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(80, 3))
        y = rng.normal(size=80)
        forest = fit_forest(dataset_from_arrays(X, y), n_trees=7, seed=1)
        probe = rng.normal(size=(20, 3))
        per_tree = np.stack([predict_tree(t, probe) for t in forest.trees])
        assert np.array_equal(predict_forest(forest, probe), per_tree.mean(axis=0))

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(60, 3))
        y = rng.normal(size=60)
        ds = dataset_from_arrays(X, y)
        f1 = fit_forest(ds, n_trees=5, seed=3)
        f2 = fit_forest(ds, n_trees=5, seed=3)
        probe = rng.normal(size=(30, 3))
        assert np.array_equal(predict_forest(f1, probe), predict_forest(f2, probe))
        assert np.array_equal(f1.inclusion_counts, f2.inclusion_counts)

    def test_inclusion_counts_sum_to_n(self):
        rng = np.random.default_rng(11)
        ds = dataset_from_arrays(rng.normal(size=(50, 2)), rng.normal(size=50))
        forest = fit_forest(ds, n_trees=6, seed=2)
        assert np.all(forest.inclusion_counts.sum(axis=1) == 50)

    def test_variance_reduction_on_synthetic(self):
        rng = np.random.default_rng(12)
        n = 600
        X = rng.normal(size=(n, 4))
        y = np.sin(X[:, 0]) * 3 + X[:, 1] ** 2 + rng.normal(size=n)
        Xt = rng.normal(size=(300, 4))
        yt = np.sin(Xt[:, 0]) * 3 + Xt[:, 1] ** 2 + rng.normal(size=300)
        ds = dataset_from_arrays(X, y)
        tree = fit_tree(ds, max_depth=None, min_samples_leaf=2)
        forest = fit_forest(ds, n_trees=100, max_depth=None, min_samples_leaf=2, seed=0)
        rmse_tree = np.sqrt(np.mean((predict_tree(tree, Xt) - yt) ** 2))
        rmse_forest = np.sqrt(np.mean((predict_forest(forest, Xt) - yt) ** 2))
        assert rmse_forest <= rmse_tree

    def test_permutation_invariance(self):
        rng = np.random.default_rng(13)
        ds = dataset_from_arrays(rng.normal(size=(60, 3)), rng.normal(size=60))
        forest = fit_forest(ds, n_trees=8, seed=4)
        probe = rng.normal(size=(10, 3))
        base = predict_forest(forest, probe)
        forest.trees.reverse()
        assert np.allclose(predict_forest(forest, probe), base)


class TestGbt:
    def test_round_one_depth_zero_predicts_mean(self):
        rng = np.random.default_rng(14)
        X = rng.normal(size=(50, 2))
        y = rng.normal(size=50)
        model = fit_gbt(dataset_from_arrays(X, y), rounds=1, learning_rate=1.0,
                        reg_lambda=0.0, max_depth=0)
        assert np.allclose(predict_gbt(model, X), y.mean())

    def test_single_round_recovers_step(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0.0, 0.0, 10.0, 10.0])
        model = fit_gbt(dataset_from_arrays(X, y), rounds=1, learning_rate=1.0,
                        reg_lambda=0.0, max_depth=1)
        # hand evaluation: residuals -5,-5,5,5; leaf weights -G/H = +-5
        assert np.allclose(predict_gbt(model, X), y)

    def test_huge_lambda_freezes_at_base(self):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(60, 2))
        y = rng.normal(size=60)
        model = fit_gbt(dataset_from_arrays(X, y), rounds=5, learning_rate=1.0,
                        reg_lambda=1e12, max_depth=3)
        assert np.allclose(predict_gbt(model, X), model.base_score, atol=1e-6)

    def test_training_rmse_monotone(self):
        rng = np.random.default_rng(16)
        X = rng.normal(size=(300, 4))
        y = X[:, 0] ** 2 + np.abs(X[:, 1]) + rng.normal(size=300)
        model = fit_gbt(dataset_from_arrays(X, y), rounds=100, learning_rate=0.3,
                        reg_lambda=1.0, max_depth=3)
        assert np.all(np.diff(model.train_rmse_path) <= 1e-12)

    def test_min_gain_blocks_weak_splits(self):
        rng = np.random.default_rng(17)
        X = rng.normal(size=(100, 2))
        y = 0.01 * X[:, 0] + rng.normal(size=100) * 0.001
        model = fit_gbt(dataset_from_arrays(X, y), rounds=3, learning_rate=0.5,
                        reg_lambda=0.0, max_depth=3, min_gain=1e9)
        assert all(t.is_leaf for t in model.trees)

    def test_quantile_mode_close_to_exact(self):
        rng = np.random.default_rng(18)
        X = rng.normal(size=(500, 3))
        y = 3 * (X[:, 0] > 0.5) + rng.normal(size=500) * 0.2
        ds = dataset_from_arrays(X, y)
        exact = fit_gbt(ds, rounds=20, learning_rate=0.3, max_depth=2)
        sketch = fit_gbt(ds, rounds=20, learning_rate=0.3, max_depth=2, max_bins=64)
        rmse_exact = np.sqrt(np.mean((predict_gbt(exact, X) - y) ** 2))
        rmse_sketch = np.sqrt(np.mean((predict_gbt(sketch, X) - y) ** 2))
        assert rmse_sketch < rmse_exact * 1.25


class TestImportances:
    def test_single_split_tree(self):
        X = np.array([[0.0, 5.0], [1.0, 5.0], [2.0, 5.0], [3.0, 5.0]])
        y = np.array([0.0, 0.0, 10.0, 10.0])
        root = fit_tree(dataset_from_arrays(X, y), max_depth=1)
        imp = impurity_importances(root, 2)
        assert imp[0] > 0
        assert imp[1] == 0.0

    def test_label_copy_beats_noise(self):
        wins = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            y = rng.normal(size=120)
            X = np.stack([rng.normal(size=120), y], axis=1)  # x1 duplicates label
            root = fit_tree(dataset_from_arrays(X, y), max_depth=4, min_samples_leaf=5)
            imp = impurity_importances(root, 2)
            wins += imp[1] > imp[0]
        assert wins == 50

    def test_forest_importance_is_mean_of_trees(self):
        rng = np.random.default_rng(19)
        ds = dataset_from_arrays(rng.normal(size=(80, 3)), rng.normal(size=80))
        forest = fit_forest(ds, n_trees=5, seed=7)
        per_tree = np.stack([impurity_importances(t, 3) for t in forest.trees])
        assert np.allclose(impurity_importances(forest, 3), per_tree.mean(axis=0))


class TestSelectByNoise:
    def _dataset(self, seed, n=400):
        rng = np.random.default_rng(seed)
        signal = rng.normal(size=n)
        disc = rng.integers(0, 6, size=n).astype(float)
        junk = rng.normal(size=n)
        y = 3.0 * signal + 0.7 * disc + 0.3 * rng.normal(size=n)
        X = np.stack([signal, junk, disc], axis=1)
        return dataset_from_arrays(X, y, names=("signal", "junk", "disc"),
                                   kinds=(CONTINUOUS, CONTINUOUS, DISCRETE))

    def test_label_copy_always_selected(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            y = rng.normal(size=300)
            X = np.stack([y, rng.normal(size=300)], axis=1)
            ds = dataset_from_arrays(X, y, names=("copy", "junk"))
            selected = select_by_noise(ds, "tree", seed=seed)
            assert "copy" in selected

    def test_noise_feature_rarely_selected(self):
        hits = 0
        for seed in range(40):
            rng = np.random.default_rng(1000 + seed)
            y = rng.normal(size=300)
            X = np.stack([y, rng.normal(size=300)], axis=1)
            ds = dataset_from_arrays(X, y, names=("copy", "junk"))
            if "junk" in select_by_noise(ds, "tree", seed=seed):
                hits += 1
        assert hits <= 8

    def test_discrete_compared_to_discrete(self):
        ds = self._dataset(seed=21)
        selected = select_by_noise(ds, "gbt", seed=0,
                                   params={"rounds": 30, "max_depth": 3})
        assert "signal" in selected
        assert "disc" in selected

    def test_empty_selection_allowed(self):
        rng = np.random.default_rng(22)
        X = rng.normal(size=(200, 2))
        y = rng.normal(size=200)
        selected = select_by_noise(dataset_from_arrays(X, y), "tree", seed=3)
        assert isinstance(selected, list)

    def test_deterministic(self):
        ds = self._dataset(seed=23)
        a = select_by_noise(ds, "forest", seed=9, params={"n_trees": 10})
        b = select_by_noise(ds, "forest", seed=9, params={"n_trees": 10})
        assert a == b
