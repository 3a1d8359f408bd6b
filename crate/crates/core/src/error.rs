//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown timezone `{0}`")]
    UnknownTimezone(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("storage error: {0}")]
    Storage(#[from] rusqlite::Error),

    #[error("store `{0}` is locked by another process")]
    StoreLocked(PathBuf),

    #[error("raw item {0} not found")]
    RawItemNotFound(i64),

    #[error("{path}: csv error: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{file}: missing required column `{column}`")]
    MissingColumn { file: PathBuf, column: String },

    #[error("{file}: headers match no known export schema: [{headers}]")]
    UnrecognizedSchema { file: PathBuf, headers: String },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("empty horizon: start {0} is not before end {1}")]
    EmptyHorizon(i64, i64),

    #[error("window `{label}` [{start}, {end}) lies outside the timeline horizon")]
    WindowOutsideHorizon { label: String, start: i64, end: i64 },

    #[error("invalid metric inputs: {0}")]
    InvalidMetricInputs(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("yaml error: {0}")]
    Yaml(#[from] serde_yaml::Error),

    #[error("json error: {0}")]
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

pub type Result<T> = std::result::Result<T, Error>;
