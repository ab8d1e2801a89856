//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or network shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An API contract was violated (non-scalar loss, length mismatch,
    /// missing snapshot, bad parameter value, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Every mixture component underflowed for one data point.
    #[error("degenerate point at index {index}: all mixture components underflow")]
    DegeneratePoint { index: usize },

    /// KL divergence is undefined: q has no mass where p does.
    #[error("support violation: q[{index}] = 0 but p[{index}] = {p} > 0")]
    Support { index: usize, p: f64 },

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: u64, detail: String },

    /// Bad experiment or dataset configuration.
    #[error("invalid config: {0}")]
    Config(String),

    /// A serialized artifact (checkpoint, model file) is malformed.
    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
