use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("GeoJSON error: {0}")]
    GeoJson(String),

    #[error("{file}: row {row}: {message}")]
    Row {
        file: String,
        row: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),

    #[error("no feature matching filter {filter} in layer {layer}")]
    NoMatchingFeature { layer: String, filter: String },

    #[error("predictor {predictor} at location {location}: {source}")]
    Predictor {
        location: String,
        predictor: String,
        #[source]
        source: Box<Error>,
    },

    #[error("column mismatch: {0}")]
    ColumnMismatch(String),

    #[error("missing column {0}")]
    MissingColumn(String),

    #[error("constant input: {0}")]
    Constant(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
