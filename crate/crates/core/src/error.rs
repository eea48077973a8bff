use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("header has {found} columns, expected {expected} (n_u + n_y)")]
    HeaderMismatch { expected: usize, found: usize },

    #[error("non-finite or unparsable value at data row {row}, column {column}")]
    NonFiniteValue { row: usize, column: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("need at least {needed} samples, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("softplus inverse requires a positive value, got {0}")]
    NonPositiveInput(f64),

    #[error("non-finite antecedent parameter at index {0}")]
    NonFiniteParameter(usize),

    #[error("rule index {index} out of range 1..={rules}")]
    IndexOutOfRange { index: usize, rules: usize },

    #[error("degenerate domain [{min}, {max}]")]
    DegenerateDomain { min: f64, max: f64 },

    #[error("rollout diverged at step {step}: max |x| = {magnitude:e}")]
    NumericalDivergence { step: usize, magnitude: f64 },

    #[error("training diverged: every mini-batch of epoch {epoch} diverged")]
    DivergedRun { epoch: usize },

    #[error("every seed diverged ({seeds} seeds)")]
    AllSeedsDiverged { seeds: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
