//! Model search: learners, imputation, metrics, cost functions and the
//! budgeted configuration search with threshold tuning.

mod artifact;
mod cost;
mod learner;
mod metrics;
mod preprocess;
mod search;
mod spec;

pub use artifact::{ModelArtifact, ResultRecord};
pub use cost::{f1_score, BuiltinCost, CostFunction};
pub use learner::{fit_learner, predict_scores, Criterion, FittedLearner, Node, Tree, TreeParams, REGISTERED_LEARNERS};
pub use metrics::{auc, compute_metrics, decide, Confusion, Metrics};
pub use preprocess::{ColumnPrep, Preprocessor};
pub use search::{
    leaderboard_csv, prepare_split, search_model, threshold_grid, tune_threshold, AutomlMethod, Budget, EntryStatus,
    LeaderboardEntry, MethodEntry, PreparedSplit, SearchOutcome, SearchParams, SeedResult, Splits,
};
pub use spec::{hyperparameters_key, HyperValue, Hyperparameters, MethodSpec, ParamSpec, ParamType};

#[cfg(test)]
pub(crate) use spec::tests_support;
