use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(String),

    #[error("missing header row")]
    MissingHeader,

    #[error("duplicate column `{0}` in header")]
    DuplicateColumn(String),

    #[error("empty column name at position {0}")]
    EmptyColumnName(usize),

    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a finite number")]
    InvalidCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: label `{value}` is not 0 or 1")]
    InvalidLabel {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("feature {index} is not finite")]
    NonFinite { index: usize },

    #[error("feature index {index} out of range for {n_features} features")]
    FeatureIndex { index: usize, n_features: usize },

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("{n_features} features exceed the limit of {limit} for this method")]
    TooManyFeatures { n_features: usize, limit: usize },

    #[error("class index {0} is not 0 or 1")]
    ClassIndex(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("least-squares system is singular; increase the number of coalitions")]
    SingularSystem,

    #[error("feature `{0}` is constant")]
    ConstantFeature(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
