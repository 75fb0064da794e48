use std::path::PathBuf;

use thiserror::Error;

use crate::entityset::ConsistencyReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("json syntax error: {0}")]
    Json(String),

    #[error("schema violation at `{pointer}`: {message}")]
    Schema { pointer: String, message: String },

    #[error("missing data file for entity `{entity}`: {path}")]
    MissingFile { entity: String, path: PathBuf },

    #[error("DuplicateIndex({entity}, {column}, row {row})")]
    DuplicateIndex { entity: String, column: String, row: usize },

    #[error("unparseable value `{value}` in {entity}.{column} at row {row}: expected {expected}")]
    BadValue {
        entity: String,
        column: String,
        row: usize,
        value: String,
        expected: String,
    },

    #[error("missing time index value in {entity}.{column} at row {row}")]
    MissingTime { entity: String, column: String, row: usize },

    #[error("missing index value in {entity}.{column} at row {row}")]
    MissingIndex { entity: String, column: String, row: usize },

    #[error("dangling foreign key `{value}` in {entity}.{column} at row {row} (no such {parent})")]
    DanglingKey {
        entity: String,
        column: String,
        row: usize,
        value: String,
        parent: String,
    },

    #[error("consistency check failed: {0}")]
    Consistency(ConsistencyReport),

    #[error("functional dependency violated in `{entity}` for key `{key}`")]
    FunctionalDependency { entity: String, key: String },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown variable `{entity}.{variable}`")]
    UnknownVariable { entity: String, variable: String },

    #[error("unknown instance `{id}` in entity `{entity}`")]
    UnknownInstance { entity: String, id: String },

    #[error("invalid duration `{0}`")]
    InvalidDuration(String),

    #[error("invalid timestamp `{0}`")]
    InvalidTimestamp(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("labeling function failed for instance `{instance}` at window {window_start}: {message}")]
    LabelingFailed {
        instance: String,
        window_start: String,
        message: String,
    },

    #[error("malformed feature name `{input}` at position {position}: {message}")]
    FeatureName {
        input: String,
        position: usize,
        message: String,
    },

    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),

    #[error("degenerate labels: {0}")]
    Degenerate(String),

    #[error("hyperparameter `{param}` out of range: {message}")]
    HyperparameterRange { param: String, message: String },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("budget exhausted before any configuration completed ({} attempted)", .leaderboard.len())]
    BudgetExhausted {
        leaderboard: Vec<crate::model::LeaderboardEntry>,
    },

    #[error("column mismatch at position {position}: expected `{expected}`, found `{found}`")]
    ColumnMismatch {
        position: usize,
        expected: String,
        found: String,
    },

    #[error("missing artifact {path}; run `{producer}` first")]
    MissingArtifact { path: PathBuf, producer: String },

    #[error("provenance block `{0}` is missing")]
    MissingBlock(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cost function error: {0}")]
    Cost(String),

    #[error("learner error: {0}")]
    Learner(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            pointer: pointer.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::MissingArtifact { .. } | Error::InvalidParams(_) => 2,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
