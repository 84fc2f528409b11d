//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value violates its documented domain.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Matrix or vector dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The projected precoder is identically zero, so the sum-power
    /// normalization has no solution. Callers should re-draw or
    /// re-initialize whatever produced the base matrix.
    #[error("degenerate precoder: projected base matrix is zero")]
    DegeneratePrecoder,

    /// Loss or gradients became non-finite during training.
    #[error("training diverged at step {step}: {detail}")]
    TrainingDiverged { step: usize, detail: String },

    /// A persisted file does not match the schema this build expects.
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// A checkpoint file is malformed or inconsistent.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
