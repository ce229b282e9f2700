use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("frequency error: expected {expected}, found {found}")]
    Frequency { expected: String, found: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("method error: {0}")]
    Method(String),

    #[error("too many features for exhaustive Shapley enumeration: {0} > {max}", max = crate::interpret::MAX_BRUTE_FORCE_FEATURES)]
    TooManyFeatures(usize),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (manifest, config, CLI
    /// arguments) rather than by a failure during computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Method(_)
                | Error::Io { .. }
                | Error::Parse { .. }
                | Error::Validation(_)
                | Error::Json(_)
        )
    }
}
