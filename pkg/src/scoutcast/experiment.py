"""Experiment runner: config parsing, the simulate/features/tune/train/
evaluate/report pipeline steps, artifact serialization, and run manifests.

All artifacts are deterministic files; two runs with the same config produce
byte-identical datasets, models, and reports (manifest timings excepted).
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    DataError,
    Dataset,
    dataset_split_by_time,
    holdout_players,
    load_dataset_csv,
    save_dataset_csv,
)
from .evaluation import (
    PredictionsTable,
    assemble_report,
    save_report,
    write_plot_tables,
)
from .features import (
    build_knn_dataset,
    build_quality_dataset,
    build_value_dataset,
)
from .knn import NeighborIndex, build_index, predict_knn_many, rrelieff_weights
from .linear import (
    LinearFit,
    LmeFit,
    backward_select,
    fit_lasso,
    fit_lme,
    lasso_max_lambda,
    predict_on_dataset,
)
from .ratings import export_rating_series, RatingHistory
from .selection import (
    Categorical,
    HyperSpace,
    Integer,
    Real,
    TuneTrace,
    assert_no_leakage,
    expanding_window_splits,
    fold_indices,
    smbo_tune,
)
from .uncertainty import forest_jackknife_variance
from .simulate import HistoryBundle, SimConfig, load_bundle, run_simulation, save_bundle
from .trees import (
    ForestModel,
    GbtModel,
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

MODEL_KINDS = (
    "ols", "lasso", "lme", "tree", "forest", "gbt",
    "knn_euclidean", "knn_mahalanobis", "knn_relieff",
)
KNN_KINDS = ("knn_euclidean", "knn_mahalanobis", "knn_relieff")

# paper defaults: backward-selection p thresholds per prediction problem
P_THRESHOLDS = {"quality": 0.0001, "value": 0.001}


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to CLI exit code 2)."""


def derive_seed(master: int, component: str) -> int:
    """Stable per-component seed: the component name hashed with the master."""
    digest = hashlib.sha256(f"{master}:{component}".encode()).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


@dataclass
class ModelSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)
    space: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"models[{self.name}].kind: unknown kind {self.kind!r}; "
                              f"expected one of {MODEL_KINDS}")


@dataclass
class ExperimentConfig:
    seed: int = 0
    indicator: str = "quality"
    cutoff_year: int = 2020
    holdout_fraction: float = 0.05
    output_dir: str = "runs/default"
    tuning_budget: int = 12
    tuning_n_init: int = 5
    coverage_level: float = 0.95
    sim: SimConfig = field(default_factory=SimConfig)
    models: list[ModelSpec] = field(default_factory=list)

    def __post_init__(self):
        if self.indicator not in ("quality", "value"):
            raise ConfigError(f"indicator: expected 'quality' or 'value', got {self.indicator!r}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction: must be in (0, 1)")
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError("models: duplicate model names")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "indicator": self.indicator,
            "cutoff_year": self.cutoff_year,
            "holdout_fraction": self.holdout_fraction,
            "output_dir": self.output_dir,
            "tuning_budget": self.tuning_budget,
            "tuning_n_init": self.tuning_n_init,
            "coverage_level": self.coverage_level,
            "sim": self.sim.to_dict(),
            "models": [
                {"name": m.name, "kind": m.kind, "params": m.params, "space": m.space}
                for m in self.models
            ],
        }

    def config_hash(self) -> str:
        # output_dir is where a run lands, not what it computes
        payload = {k: v for k, v in self.to_dict().items() if k != "output_dir"}
        return hashlib.sha256(_canonical_json(payload).encode()).hexdigest()


def default_models(indicator: str) -> list[ModelSpec]:
    """All nine model kinds with documented desk-scale defaults."""
    return [
        ModelSpec("ols", "ols", {"p_threshold": P_THRESHOLDS[indicator]}),
        ModelSpec("lasso", "lasso", {"lambda_frac": 0.02}),
        ModelSpec("lme", "lme", {"max_features": 20}),
        ModelSpec("tree", "tree", {"max_depth": 8, "min_samples_leaf": 50}),
        ModelSpec("forest", "forest",
                  {"n_trees": 35, "max_depth": 9, "min_samples_leaf": 20}),
        ModelSpec("gbt", "gbt",
                  {"rounds": 50, "learning_rate": 0.15, "reg_lambda": 1.0,
                   "min_gain": 0.0, "max_depth": 4, "subsample": 0.5}),
        ModelSpec("knn_euclidean", "knn_euclidean", {"k": 25, "weighting": "minmax"}),
        ModelSpec("knn_mahalanobis", "knn_mahalanobis", {"k": 25, "weighting": "minmax"}),
        ModelSpec("knn_relieff", "knn_relieff", {"k": 25, "weighting": "minmax"}),
    ]


def _parse_space(raw: dict, where: str) -> HyperSpace:
    space: HyperSpace = {}
    for name, dom in raw.items():
        try:
            kind = dom["type"]
            if kind == "real":
                space[name] = Real(dom["lo"], dom["hi"], dom.get("log", False))
            elif kind == "integer":
                space[name] = Integer(dom["lo"], dom["hi"])
            elif kind == "categorical":
                space[name] = Categorical(tuple(dom["options"]))
            else:
                raise ConfigError(f"{where}.{name}: unknown domain type {kind!r}")
        except KeyError as exc:
            raise ConfigError(f"{where}.{name}: missing field {exc}") from None
    return space


def config_from_dict(raw: dict) -> ExperimentConfig:
    try:
        models = [
            ModelSpec(m["name"], m["kind"], m.get("params", {}), m.get("space", {}))
            for m in raw.get("models", [])
        ]
        cfg = ExperimentConfig(
            seed=int(raw.get("seed", 0)),
            indicator=raw.get("indicator", "quality"),
            cutoff_year=int(raw.get("cutoff_year", 2020)),
            holdout_fraction=float(raw.get("holdout_fraction", 0.05)),
            output_dir=raw.get("output_dir", "runs/default"),
            tuning_budget=int(raw.get("tuning_budget", 12)),
            tuning_n_init=int(raw.get("tuning_n_init", 5)),
            coverage_level=float(raw.get("coverage_level", 0.95)),
            sim=SimConfig.from_dict({**raw.get("sim", {}),
                                     "seed": int(raw.get("sim", {}).get("seed", raw.get("seed", 0)))}),
            models=models,
        )
    except (TypeError, ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc}") from exc
    if not cfg.models:
        cfg.models = default_models(cfg.indicator)
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix in (".yaml", ".yml"):
            import yaml

            raw = yaml.safe_load(text)
        else:
            raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    except Exception as exc:  # yaml errors carry their own marks
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(raw)


# -- pipeline steps ----------------------------------------------------------


def dataset_dir(cfg: ExperimentConfig, out: str | Path | None = None) -> Path:
    return Path(out or cfg.output_dir) / "dataset"


def models_dir(cfg: ExperimentConfig, out: str | Path | None = None) -> Path:
    return Path(out or cfg.output_dir) / "models"


def report_dir(cfg: ExperimentConfig, out: str | Path | None = None) -> Path:
    return Path(out or cfg.output_dir) / "report"


def cmd_simulate(cfg: ExperimentConfig, out: str | Path | None = None) -> Path:
    """Run the simulator and materialize every dataset CSV plus provenance."""
    target = dataset_dir(cfg, out)
    target.mkdir(parents=True, exist_ok=True)
    bundle = run_simulation(cfg.sim)
    save_bundle(bundle, target / "bundle")
    history = RatingHistory(states={}, series={
        pid: h.rating_series for pid, h in sorted(bundle.players.items())})
    export_rating_series(history, target / "ratings.csv")
    with open(target / "simconfig.json", "w", encoding="utf-8") as fh:
        json.dump(cfg.sim.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_datasets(cfg, bundle, target)
    return target


def cmd_features(cfg: ExperimentConfig, out: str | Path | None = None) -> Path:
    """Rebuild the dataset CSVs from a saved simulation bundle."""
    target = dataset_dir(cfg, out)
    bundle_dir = target / "bundle"
    if not bundle_dir.exists():
        raise DataError(f"no simulation bundle at {bundle_dir}; run simulate first")
    bundle = load_bundle(bundle_dir)
    _write_datasets(cfg, bundle, target)
    return target


def _write_datasets(cfg: ExperimentConfig, bundle: HistoryBundle, target: Path) -> None:
    reports = {}
    quality, reports["quality"] = build_quality_dataset(bundle)
    save_dataset_csv(quality, target / "quality.csv")
    value, reports["value"] = build_value_dataset(
        bundle, correlation_cutoff_year=cfg.cutoff_year)
    save_dataset_csv(value, target / "value.csv")
    for kind in ("quality", "value"):
        knn_ds, reports[f"knn_{kind}"] = build_knn_dataset(bundle, kind)
        save_dataset_csv(knn_ds, target / f"knn_{kind}.csv")
    with open(target / "build_reports.json", "w", encoding="utf-8") as fh:
        json.dump(reports, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_split(cfg: ExperimentConfig, data_dir: str | Path):
    """Load the indicator's datasets, apply the player holdout, split by time.

    Returns (train, test, knn_train, knn_test, holdout).
    """
    data_dir = Path(data_dir)
    main_path = data_dir / f"{cfg.indicator}.csv"
    if not main_path.exists():
        raise DataError(f"dataset {main_path} not found; run simulate first")
    main = load_dataset_csv(main_path)
    knn_ds = load_dataset_csv(data_dir / f"knn_{cfg.indicator}.csv")
    if (len(main) != len(knn_ds)
            or not np.array_equal(main.player_id, knn_ds.player_id)
            or not np.array_equal(main.snapshot_date, knn_ds.snapshot_date)):
        raise DataError("main and kNN datasets are misaligned; rebuild features")
    kept, holdout = holdout_players(main, cfg.holdout_fraction,
                                    derive_seed(cfg.seed, "holdout"))
    held_ids = np.unique(holdout.player_id)
    knn_kept = knn_ds.subset(~np.isin(knn_ds.player_id, held_ids))
    train, test = dataset_split_by_time(kept, cfg.cutoff_year)
    knn_train, knn_test = dataset_split_by_time(knn_kept, cfg.cutoff_year)
    if not np.array_equal(train.player_id, knn_train.player_id):
        raise DataError("kNN train rows diverge from the main dataset")
    return train, test, knn_train, knn_test, holdout


@dataclass
class TrainedModel:
    name: str
    kind: str
    obj: object
    feature_names: tuple[str, ...]
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def predict(self, main: Dataset, knn_ds: Dataset) -> np.ndarray:
        if self.kind in KNN_KINDS:
            cols = [knn_ds.schema.index(nm) for nm in self.feature_names]
            return predict_knn_many(self.obj, knn_ds.X[:, cols],
                                    self.params["k"], self.params["weighting"])
        if self.kind in ("ols", "lasso", "lme"):
            return predict_on_dataset(self.obj, main)
        X = main.X[:, [main.schema.index(nm) for nm in self.feature_names]]
        if self.kind == "tree":
            return predict_tree(self.obj, X)
        if self.kind == "forest":
            return predict_forest(self.obj, X)
        if self.kind == "gbt":
            return predict_gbt(self.obj, X)
        raise DataError(f"cannot predict with kind {self.kind!r}")

    def raw_importances(self) -> dict[str, float] | None:
        if self.kind in ("ols", "lasso"):
            imp = self.obj.standardized_importances()
            return dict(zip(self.obj.feature_names, map(float, imp)))
        if self.kind == "lme":
            stds = np.array(self.meta["feature_stds"])
            return dict(zip(self.obj.feature_names,
                            map(float, np.abs(self.obj.coef) * stds)))
        if self.kind in ("tree", "forest", "gbt"):
            imp = impurity_importances(self.obj, len(self.feature_names))
            return dict(zip(self.feature_names, map(float, imp)))
        return None  # kNN models are excluded from importance comparisons


def train_model(spec: ModelSpec, train: Dataset, knn_train: Dataset,
                indicator: str, seed: int) -> TrainedModel:
    """Fit one model with its paper-mandated feature-selection protocol."""
    params = dict(spec.params)
    meta: dict = {}
    if spec.kind == "ols":
        thr = params.get("p_threshold", P_THRESHOLDS[indicator])
        fit = backward_select(train, thr)
        meta["p_threshold"] = thr
        meta["dropped"] = list(fit.dropped)
        return TrainedModel(spec.name, spec.kind, fit, fit.feature_names, params, meta)
    if spec.kind == "lasso":
        lam = params.get("lam")
        if lam is None:
            lam = params.get("lambda_frac", 0.02) * lasso_max_lambda(train.X, train.y)
        fit = fit_lasso(train, float(lam))
        meta["lam"] = float(lam)
        meta["selected"] = [nm for nm, c in zip(fit.feature_names, fit.coef) if c != 0.0]
        return TrainedModel(spec.name, spec.kind, fit, fit.feature_names, params, meta)
    if spec.kind == "lme":
        fit = fit_lme(train, params.get("group_feature", "nationality"),
                      params.get("max_features", 20), params.get("lasso_lambda"))
        stds = [float(train.feature(nm).std()) for nm in fit.feature_names]
        meta["feature_stds"] = stds
        return TrainedModel(spec.name, spec.kind, fit, fit.feature_names, params, meta)
    if spec.kind in ("tree", "forest", "gbt"):
        noise_seed = derive_seed(seed, f"noise:{spec.name}")
        selected = select_by_noise(train, spec.kind,
                                   params.get("n_noise_continuous", 3),
                                   params.get("n_noise_discrete", 3),
                                   noise_seed, params)
        meta["noise_selection_empty"] = not selected
        if not selected:
            selected = list(train.schema.names)
        meta["selected"] = list(selected)
        sub = train.select_features(selected)
        if spec.kind == "tree":
            obj = fit_tree(sub, params.get("max_depth", 8),
                           params.get("min_samples_leaf", 50))
        elif spec.kind == "forest":
            obj = fit_forest(sub, params.get("n_trees", 40), params.get("mtry"),
                             params.get("max_depth", 9),
                             params.get("min_samples_leaf", 20),
                             seed=derive_seed(seed, f"forest:{spec.name}"))
        else:
            obj = fit_gbt(sub, params.get("rounds", 60),
                          params.get("learning_rate", 0.15),
                          params.get("reg_lambda", 1.0),
                          params.get("min_gain", 0.0),
                          params.get("max_depth", 4),
                          params.get("subsample", 1.0),
                          params.get("min_samples_leaf", 1),
                          seed=derive_seed(seed, f"gbt:{spec.name}"),
                          max_bins=params.get("max_bins", 0))
        return TrainedModel(spec.name, spec.kind, obj, tuple(selected), params, meta)
    if spec.kind in KNN_KINDS:
        params.setdefault("k", 25)
        params["k"] = int(min(params["k"], len(knn_train)))
        params.setdefault("weighting", "minmax")
        weights = None
        metric = "euclidean"
        if spec.kind == "knn_mahalanobis":
            metric = "mahalanobis"
        elif spec.kind == "knn_relieff":
            m = min(params.get("relieff_samples", 500), len(knn_train))
            weights = rrelieff_weights(knn_train, m,
                                       params.get("relieff_neighbors", 10),
                                       derive_seed(seed, f"relieff:{spec.name}"))
            meta["relieff_weights"] = [float(w) for w in weights]
        index = build_index(knn_train.X, knn_train.y, metric=metric,
                            feature_weights=weights,
                            ridge=params.get("ridge", 1e-6))
        return TrainedModel(spec.name, spec.kind, index,
                            knn_train.schema.names, params, meta)
    raise ConfigError(f"unknown model kind {spec.kind!r}")


# -- artifact serialization --------------------------------------------------


def _tree_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"value": node.value, "n": node.n}
    return {
        "value": node.value, "n": node.n, "feature": node.feature,
        "threshold": node.threshold, "gain": node.gain,
        "left": _tree_to_dict(node.left), "right": _tree_to_dict(node.right),
    }


def _tree_from_dict(d: dict) -> TreeNode:
    node = TreeNode(value=d["value"], n=d["n"])
    if "feature" in d:
        node.feature = d["feature"]
        node.threshold = d["threshold"]
        node.gain = d["gain"]
        node.left = _tree_from_dict(d["left"])
        node.right = _tree_from_dict(d["right"])
    return node


def save_model(model: TrainedModel, out_dir: str | Path, dataset_hash: str,
               seed: int) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload: dict = {
        "name": model.name,
        "kind": model.kind,
        "feature_names": list(model.feature_names),
        "params": model.params,
        "meta": model.meta,
        "training": {"seed": seed, "dataset_hash": dataset_hash,
                     "tool_version": __version__},
    }
    files = [out / f"{model.name}.json"]
    obj = model.obj
    if model.kind in ("ols", "lasso"):
        payload["model"] = {
            "coef": obj.coef.tolist(),
            "intercept": obj.intercept,
            "residual_variance": obj.residual_variance,
            "n": obj.n, "p": obj.p, "rss": obj.rss,
            "feature_means": obj.feature_means.tolist(),
            "feature_stds": obj.feature_stds.tolist(),
            "coef_covariance": None if obj.coef_covariance is None
            else obj.coef_covariance.tolist(),
            "p_values": None if obj.p_values is None else obj.p_values.tolist(),
            "intercept_only": obj.intercept_only,
            "dropped": list(obj.dropped),
            "max_kkt_violation": obj.max_kkt_violation,
        }
    elif model.kind == "lme":
        payload["model"] = {
            "coef": obj.coef.tolist(),
            "intercept": obj.intercept,
            "group_key": obj.group_key,
            "random_intercepts": {str(k): v for k, v in sorted(obj.random_intercepts.items())},
            "sigma2": obj.sigma2, "tau2": obj.tau2,
            "n": obj.n, "n_groups": obj.n_groups,
            "converged": obj.converged,
        }
    elif model.kind == "tree":
        payload["model"] = {"tree": _tree_to_dict(obj)}
    elif model.kind == "forest":
        payload["model"] = {
            "trees": [_tree_to_dict(t) for t in obj.trees],
            "mtry": obj.mtry, "seed": obj.seed, "n_train": obj.n_train,
        }
        counts_path = out / f"{model.name}_counts.npy"
        np.save(counts_path, obj.inclusion_counts)
        files.append(counts_path)
    elif model.kind == "gbt":
        payload["model"] = {
            "base_score": obj.base_score,
            "trees": [_tree_to_dict(t) for t in obj.trees],
            "learning_rate": obj.learning_rate,
            "reg_lambda": obj.reg_lambda,
            "min_gain": obj.min_gain,
            "rounds": obj.rounds,
            "train_rmse_path": obj.train_rmse_path.tolist(),
        }
    elif model.kind in KNN_KINDS:
        pts_path = out / f"{model.name}_points.npy"
        lbl_path = out / f"{model.name}_labels.npy"
        np.save(pts_path, obj.points)
        np.save(lbl_path, obj.labels)
        files.extend([pts_path, lbl_path])
        payload["model"] = {
            "mins": None if obj.mins is None else obj.mins.tolist(),
            "ranges": None if obj.ranges is None else obj.ranges.tolist(),
            "transform": None if obj.transform is None else obj.transform.tolist(),
            "feature_weights": None if obj.feature_weights is None
            else obj.feature_weights.tolist(),
            "index_kind": obj.kind,
        }
    with open(files[0], "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return files


def load_model(path: str | Path) -> TrainedModel:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    kind = payload["kind"]
    m = payload.get("model", {})
    names = tuple(payload["feature_names"])
    if kind in ("ols", "lasso"):
        obj = LinearFit(
            feature_names=names,
            coef=np.array(m["coef"]),
            intercept=m["intercept"],
            residual_variance=m["residual_variance"],
            n=m["n"], p=m["p"], rss=m["rss"],
            feature_means=np.array(m["feature_means"]),
            feature_stds=np.array(m["feature_stds"]),
            coef_covariance=None if m["coef_covariance"] is None
            else np.array(m["coef_covariance"]),
            p_values=None if m["p_values"] is None else np.array(m["p_values"]),
            intercept_only=m["intercept_only"],
            dropped=tuple(m["dropped"]),
            kind=kind,
            max_kkt_violation=m["max_kkt_violation"],
        )
    elif kind == "lme":
        obj = LmeFit(
            feature_names=names,
            coef=np.array(m["coef"]),
            intercept=m["intercept"],
            group_key=m["group_key"],
            random_intercepts={int(k): v for k, v in m["random_intercepts"].items()},
            sigma2=m["sigma2"], tau2=m["tau2"],
            n=m["n"], n_groups=m["n_groups"], converged=m["converged"],
        )
    elif kind == "tree":
        obj = _tree_from_dict(m["tree"])
    elif kind == "forest":
        obj = ForestModel(
            trees=[_tree_from_dict(t) for t in m["trees"]],
            inclusion_counts=np.load(path.parent / f"{payload['name']}_counts.npy"),
            mtry=m["mtry"], seed=m["seed"], n_train=m["n_train"],
            feature_names=names,
        )
    elif kind == "gbt":
        obj = GbtModel(
            base_score=m["base_score"],
            trees=[_tree_from_dict(t) for t in m["trees"]],
            learning_rate=m["learning_rate"],
            reg_lambda=m["reg_lambda"],
            min_gain=m["min_gain"],
            rounds=m["rounds"],
            feature_names=names,
            train_rmse_path=np.array(m["train_rmse_path"]),
        )
    elif kind in KNN_KINDS:
        obj = NeighborIndex(
            points=np.load(path.parent / f"{payload['name']}_points.npy"),
            labels=np.load(path.parent / f"{payload['name']}_labels.npy"),
            kind=m["index_kind"],
            mins=None if m["mins"] is None else np.array(m["mins"]),
            ranges=None if m["ranges"] is None else np.array(m["ranges"]),
            transform=None if m["transform"] is None else np.array(m["transform"]),
            feature_weights=None if m["feature_weights"] is None
            else np.array(m["feature_weights"]),
        )
    else:
        raise DataError(f"unknown artifact kind {kind!r} in {path}")
    return TrainedModel(payload["name"], kind, obj, names,
                        payload.get("params", {}), payload.get("meta", {}))


# -- tune / train / evaluate -------------------------------------------------


def default_spaces(kind: str) -> dict:
    """Documented default search spaces (the paper discloses none)."""
    spaces = {
        "forest": {"n_trees": {"type": "integer", "lo": 20, "hi": 80},
                   "mtry": {"type": "integer", "lo": 2, "hi": 8},
                   "min_samples_leaf": {"type": "integer", "lo": 5, "hi": 100}},
        "gbt": {"rounds": {"type": "integer", "lo": 30, "hi": 150},
                "learning_rate": {"type": "real", "lo": 0.03, "hi": 0.5, "log": True},
                "reg_lambda": {"type": "real", "lo": 0.1, "hi": 10.0, "log": True},
                "min_gain": {"type": "real", "lo": 0.0, "hi": 5.0},
                "max_depth": {"type": "integer", "lo": 2, "hi": 6}},
        "tree": {"max_depth": {"type": "integer", "lo": 2, "hi": 12},
                 "min_samples_leaf": {"type": "integer", "lo": 5, "hi": 200}},
        "lasso": {"lam": {"type": "real", "lo": 1e-4, "hi": 10.0, "log": True}},
    }
    knn = {"k": {"type": "integer", "lo": 5, "hi": 60},
           "weighting": {"type": "categorical",
                         "options": ["reciprocal", "minmax", "uniform"]}}
    for kk in KNN_KINDS:
        spaces[kk] = knn
    return spaces.get(kind, {})


def cmd_tune(cfg: ExperimentConfig, data_dir: str | Path | None = None,
             out: str | Path | None = None) -> dict[str, TuneTrace]:
    """Expanding-window CV objective per model; persists traces and the
    winning configs for cmd_train to pick up."""
    data = Path(data_dir or dataset_dir(cfg, out))
    train, _, knn_train, _, _ = load_split(cfg, data)
    target = models_dir(cfg, out)
    target.mkdir(parents=True, exist_ok=True)
    traces: dict[str, TuneTrace] = {}
    tuned: dict[str, dict] = {}
    folds = expanding_window_splits(train)
    for fold in folds:
        assert_no_leakage(train, fold)
    for spec in cfg.models:
        raw_space = spec.space or default_spaces(spec.kind)
        if not raw_space:
            continue
        space = _parse_space(raw_space, f"models[{spec.name}].space")

        def objective(config, _spec=spec):
            merged = ModelSpec(_spec.name, _spec.kind, {**_spec.params, **config})
            losses = []
            for fold in folds:
                fit_idx, val_idx = fold_indices(train, fold)
                model = train_model(merged, train.subset(fit_idx),
                                    knn_train.subset(fit_idx), cfg.indicator, cfg.seed)
                pred = model.predict(train.subset(val_idx), knn_train.subset(val_idx))
                losses.append(float(np.sqrt(np.mean((pred - train.y[val_idx]) ** 2))))
            return float(np.mean(losses))

        trace = smbo_tune(space, objective, cfg.tuning_budget, cfg.tuning_n_init,
                          derive_seed(cfg.seed, f"tune:{spec.name}"))
        traces[spec.name] = trace
        tuned[spec.name] = trace.best_config
        with open(target / f"tune_{spec.name}.json", "w", encoding="utf-8") as fh:
            json.dump(trace.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    with open(target / "tuned.json", "w", encoding="utf-8") as fh:
        json.dump(tuned, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return traces


def cmd_train(cfg: ExperimentConfig, data_dir: str | Path | None = None,
              out: str | Path | None = None) -> Path:
    """Feature-select and fit every configured model; write artifacts + manifest."""
    data = Path(data_dir or dataset_dir(cfg, out))
    target = models_dir(cfg, out)
    target.mkdir(parents=True, exist_ok=True)
    train, _, knn_train, _, _ = load_split(cfg, data)
    ds_hash = file_sha256(data / f"{cfg.indicator}.csv")

    tuned_path = target / "tuned.json"
    tuned = {}
    if tuned_path.exists():
        with open(tuned_path, encoding="utf-8") as fh:
            tuned = json.load(fh)

    manifest: dict = {
        "tool_version": __version__,
        "config_hash": cfg.config_hash(),
        "dataset_hashes": _hash_dataset_files(data),
        "models": {},
        "timings": {},
    }
    for spec in cfg.models:
        start = time.perf_counter()
        params = {**spec.params, **tuned.get(spec.name, {})}
        merged = ModelSpec(spec.name, spec.kind, params, spec.space)
        model = train_model(merged, train, knn_train, cfg.indicator, cfg.seed)
        model.meta["refit_on_full_train"] = True
        model.meta["tuned"] = spec.name in tuned
        files = save_model(model, target, ds_hash, cfg.seed)
        manifest["models"][spec.name] = {
            "kind": spec.kind,
            "path": files[0].name,
            "files": {f.name: file_sha256(f) for f in files},
            "n_features": len(model.feature_names),
            "tuned": spec.name in tuned,
        }
        manifest["timings"][spec.name] = round(time.perf_counter() - start, 3)
    _write_manifest(manifest, target / "manifest.json")
    return target


def _hash_dataset_files(data: Path) -> dict[str, str]:
    out = {}
    for f in sorted(data.glob("*.csv")) + sorted(data.glob("*.schema.json")):
        out[f.name] = file_sha256(f)
    return out


def _write_manifest(manifest: dict, path: Path) -> None:
    manifest["deterministic_hash"] = manifest_deterministic_hash(manifest)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def manifest_deterministic_hash(manifest: dict) -> str:
    """Hash of the manifest minus wall-clock timings (those legitimately vary)."""
    stripped = {k: v for k, v in manifest.items()
                if k not in ("timings", "deterministic_hash")}
    return hashlib.sha256(_canonical_json(stripped).encode()).hexdigest()


def empirical_coverage_section(models: list[TrainedModel], test: Dataset,
                               knn_test: Dataset, level: float, seed: int,
                               forest_probes: int = 200,
                               knn_probes: int = 1000) -> dict:
    """Interval coverage on the test set for each UQ-capable model kind."""
    from scipy import stats as _stats

    rng = np.random.default_rng(seed)
    section: dict = {}
    for model in models:
        if model.kind == "ols" and "ols_t" not in section:
            fit = model.obj
            if fit.coef_covariance is None or fit.intercept_only:
                continue
            cols = [test.schema.index(nm) for nm in fit.feature_names]
            A = np.hstack([np.ones((len(test), 1)), test.X[:, cols]])
            pred = A[:, 1:] @ fit.coef + fit.intercept
            lev = np.einsum("ij,jk,ik->i", A, fit.coef_covariance, A) / fit.residual_variance
            t = _stats.t.ppf(0.5 + level / 2.0, df=fit.n - fit.p)
            half = t * np.sqrt(fit.residual_variance) * np.sqrt(1.0 + lev)
            inside = np.abs(test.y - pred) <= half
            section["ols_t"] = {"model": model.name, "nominal_level": level,
                                "coverage": float(inside.mean()), "n": int(len(test))}
        elif model.kind == "forest" and "forest_jackknife" not in section:
            n_p = min(forest_probes, len(test))
            probes = np.sort(rng.permutation(len(test))[:n_p])
            cols = [test.schema.index(nm) for nm in model.feature_names]
            Xp = test.X[probes][:, cols]
            try:
                var = forest_jackknife_variance(model.obj, Xp)
            except DataError as exc:
                section["forest_jackknife"] = {"model": model.name,
                                               "nominal_level": level,
                                               "error": str(exc)}
                continue
            point = predict_forest(model.obj, Xp)
            z = _stats.norm.ppf(0.5 + level / 2.0)
            half = z * np.sqrt(np.asarray(var))
            inside = np.abs(test.y[probes] - point) <= half
            section["forest_jackknife"] = {"model": model.name, "nominal_level": level,
                                           "coverage": float(inside.mean()), "n": n_p}
        elif model.kind in KNN_KINDS and "knn_range" not in section:
            n_p = min(knn_probes, len(knn_test))
            probes = np.sort(rng.permutation(len(knn_test))[:n_p])
            cols = [knn_test.schema.index(nm) for nm in model.feature_names]
            from .knn import query_many

            k = max(2, int(model.params.get("k", 25)))
            _, idx = query_many(model.obj, knn_test.X[probes][:, cols], k)
            labels = model.obj.labels[idx]
            lo = labels.min(axis=1)
            hi = labels.max(axis=1)
            actual = knn_test.y[probes]
            inside = (actual >= lo) & (actual <= hi)
            section["knn_range"] = {"model": model.name, "nominal_level": level,
                                    "coverage": float(inside.mean()), "n": n_p}
    return section


def cmd_evaluate(cfg: ExperimentConfig, data_dir: str | Path | None = None,
                 model_dir: str | Path | None = None,
                 out: str | Path | None = None) -> Path:
    """Predict the test years, persist predictions, and assemble the report."""
    data = Path(data_dir or dataset_dir(cfg, out))
    mdir = Path(model_dir or models_dir(cfg, out))
    target = report_dir(cfg, out)
    target.mkdir(parents=True, exist_ok=True)
    train, test, knn_train, knn_test, _ = load_split(cfg, data)

    if cfg.indicator == "quality":
        current_quality = test.current_indicator
    else:
        current_quality = test.feature("sciskill")

    table = PredictionsTable()
    importances: dict[str, dict[str, float]] = {}
    models: list[TrainedModel] = []
    for spec in cfg.models:
        path = mdir / f"{spec.name}.json"
        if not path.exists():
            raise DataError(f"missing model artifact {path}; run train first")
        model = load_model(path)
        models.append(model)
        pred = model.predict(test, knn_test)
        table.add_model(model.name, test, pred, current_quality)
        raw = model.raw_importances()
        if raw:
            importances[model.name] = raw

    uncertainty = empirical_coverage_section(
        models, test, knn_test, cfg.coverage_level,
        derive_seed(cfg.seed, "coverage"))

    table.save_csv(target / "predictions.csv")
    extras = {"importances": importances, "uncertainty": uncertainty,
              "indicator_kind": cfg.indicator}
    with open(target / "extras.json", "w", encoding="utf-8") as fh:
        json.dump(extras, fh, indent=2, sort_keys=True)
        fh.write("\n")
    report = assemble_report(table, cfg.indicator, importances, uncertainty)
    save_report(report, target / "report.json")
    write_plot_tables(report, target)
    outputs = sorted(set(target.glob("*.csv")) | set(target.glob("*.json"))
                     | set(target.glob("*.tsv")))
    manifest = {
        "tool_version": __version__,
        "config_hash": cfg.config_hash(),
        "dataset_hashes": _hash_dataset_files(data),
        "report_hashes": {p.name: file_sha256(p) for p in outputs
                          if p.name != "manifest.json"},
        "timings": {},
    }
    _write_manifest(manifest, target / "manifest.json")
    return target


def cmd_report(cfg: ExperimentConfig, out: str | Path | None = None) -> Path:
    """Regenerate report.json from predictions.csv (plus stored extras)."""
    target = report_dir(cfg, out)
    pred_path = target / "predictions.csv"
    if not pred_path.exists():
        raise DataError(f"no predictions at {pred_path}; run evaluate first")
    table = PredictionsTable.load_csv(pred_path)
    extras_path = target / "extras.json"
    importances, uncertainty = {}, {}
    indicator = cfg.indicator
    if extras_path.exists():
        with open(extras_path, encoding="utf-8") as fh:
            extras = json.load(fh)
        importances = extras.get("importances", {})
        uncertainty = extras.get("uncertainty", {})
        indicator = extras.get("indicator_kind", indicator)
    report = assemble_report(table, indicator, importances, uncertainty)
    save_report(report, target / "report.json")
    write_plot_tables(report, target)
    return target
