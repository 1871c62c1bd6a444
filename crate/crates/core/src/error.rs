//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by dataset ingestion, regression, rollout and model I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: expected {expected} columns, found {found}")]
    ColumnCount {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: column '{column}' is not a finite number: '{value}'")]
    NonNumericCell {
        path: String,
        line: usize,
        column: String,
        value: String,
    },

    #[error("dataset '{name}' has {len} samples, need at least {min}")]
    DatasetTooShort { name: String, len: usize, min: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error(
        "state component {component} of dataset '{dataset}' has zero 2-norm; \
         the normalized rollout error is undefined for it"
    )]
    ZeroNormRow { dataset: String, component: usize },

    #[error("one-step prediction diverged at sample {step}")]
    OneStepDiverged { step: usize },

    #[error("plant '{plant}' diverged during simulation at step {step}")]
    PlantDiverged { plant: String, step: usize },

    #[error("unknown solver '{0}'")]
    UnknownSolver(String),

    #[error("unknown plant '{0}'")]
    UnknownPlant(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed model file {path}: {reason}")]
    MalformedModel { path: String, reason: String },

    #[error("model file {path} has format version {found}, supported: {supported}")]
    UnsupportedVersion {
        path: String,
        found: u32,
        supported: u32,
    },

    #[error("model invariant violated: {0}")]
    InvariantViolation(String),
}

pub type Result<T> = std::result::Result<T, Error>;
