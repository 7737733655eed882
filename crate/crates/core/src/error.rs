use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown function `{name}` (valid: {valid})")]
    UnknownFunction { name: String, valid: String },

    #[error("({x}, {y}) is outside the domain of {function}: {reason}")]
    Domain {
        function: &'static str,
        x: f64,
        y: f64,
        reason: &'static str,
    },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid resolution must be at least 2, got {0}")]
    GridTooCoarse(usize),

    #[error("length mismatch: {inputs} inputs vs {targets} targets")]
    LengthMismatch { inputs: usize, targets: usize },

    #[error("empty batch")]
    EmptyBatch,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("target range is degenerate (min = max = {0})")]
    DegenerateTargets(f64),

    #[error("dataset was not normalized")]
    NotNormalized,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("checkpoint {path} does not match this configuration: {reason}")]
    CheckpointMismatch { path: PathBuf, reason: String },

    #[error("sweep interrupted after {completed} new cells")]
    Interrupted { completed: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
