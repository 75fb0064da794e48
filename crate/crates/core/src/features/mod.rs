//! Deep Feature Synthesis and point-in-time feature matrices.

mod definition;
mod dfs;
mod matrix;
mod primitive;
mod select;

pub use definition::{parse_feature_name, AggInput, FeatureDefinition};
pub use dfs::{create_features, generation_cost, parse_feature_list, serialize_feature_list, DfsParams, FeatureList};
pub use matrix::{calculate_feature_matrix, calculate_for_label_times, FeatureMatrix};
pub use primitive::{percentile_ranks, Primitive, PrimitiveKind};
pub use select::select_features;
