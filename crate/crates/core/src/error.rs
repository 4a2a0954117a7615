use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite or invalid numeric value: {0}")]
    Numeric(String),

    #[error("matrix is not positive definite (cholesky failed after jitter {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("rank deficiency: requested s = {requested}, usable rank = {usable}")]
    Rank { requested: usize, usable: usize },

    #[error("capacity exceeded: {what} needs {needed}, limit is {limit}")]
    Capacity {
        what: &'static str,
        needed: usize,
        limit: usize,
    },

    #[error("operation not supported: {0}")]
    Unsupported(String),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("parse error in {path} at row {row}, column {col}: {msg}")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("invalid file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
