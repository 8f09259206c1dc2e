"""scoutcast: forecasting the one-year development of football player
quality and transfer value on synthetic league data."""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    DataError,
    Dataset,
    FeatureSchema,
    LabeledExample,
    MatchAppearance,
    PlayerHistory,
    PlayerProfile,
    dataset_split_by_time,
    holdout_players,
    load_dataset_csv,
    save_dataset_csv,
)
from .ratings import (  # noqa: F401
    Match,
    RatingConfig,
    RatingState,
    apply_inactivity_penalty,
    expected_score,
    run_league_history,
    team_rating,
    update_after_match,
)
from .simulate import (  # noqa: F401
    AbilityCurve,
    HistoryBundle,
    SimConfig,
    ValueModel,
    generate_population,
    generate_transfer_values,
    run_simulation,
    simulate_season,
)
from .features import (  # noqa: F401
    build_knn_dataset,
    build_quality_dataset,
    build_value_dataset,
    filter_eligibility,
)
from .linear import (  # noqa: F401
    LinearFit,
    LmeFit,
    backward_select,
    fit_lasso,
    fit_lme,
    fit_ols,
    predict_linear,
)
from .trees import (  # noqa: F401
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
from .knn import (  # noqa: F401
    NeighborIndex,
    build_index,
    build_mahalanobis,
    dudani_weights,
    predict_knn,
    query_neighbors,
    reweight_features,
    rrelieff_weights,
)
from .uncertainty import (  # noqa: F401
    PredictionInterval,
    empirical_coverage,
    forest_jackknife_variance,
    knn_range_interval,
    ols_interval,
)
from .selection import (  # noqa: F401
    Categorical,
    Fold,
    Integer,
    Real,
    TuneTrace,
    expanding_window_splits,
    smbo_tune,
)
from .evaluation import (  # noqa: F401
    SubgroupSpec,
    loss_per_age,
    mae,
    rmse,
    scaled_importances,
    subgroup_losses,
)
from .experiment import (  # noqa: F401
    ConfigError,
    ExperimentConfig,
    ModelSpec,
    cmd_evaluate,
    cmd_features,
    cmd_report,
    cmd_simulate,
    cmd_train,
    cmd_tune,
    load_config,
)
