use thiserror::Error;

/// Errors produced by the estimation kernel and its I/O edges.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient sample: need at least 2 values, got {0}")]
    InsufficientSample(usize),

    #[error("degenerate samples: both variances are zero")]
    DegenerateSamples,

    #[error("ambiguous snippet ranking: {0}")]
    AmbiguousRanking(String),

    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(String),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset row {row}: field `{field}`: {message}")]
    Schema { row: usize, field: String, message: String },

    #[error("duplicate class id `{0}`")]
    DuplicateClass(String),

    #[error("missing prediction for pair ({0}, {1})")]
    MissingPrediction(String, String),

    #[error("malformed response from {source_name}: {message}; body: {body}")]
    MalformedResponse {
        source_name: String,
        message: String,
        body: String,
    },

    #[error("request failed: {message}")]
    Transport { timeout: bool, message: String },

    #[error("missing credential: environment variable `{0}` is not set")]
    MissingCredential(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
