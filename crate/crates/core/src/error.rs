use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite gradient for parameter {param} (first bad entry at index {index}: {value})")]
    NonFiniteGradient { param: usize, index: usize, value: f64 },

    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("beta saturated at {beta}: distortion {achieved} still above target {target}")]
    Saturated { beta: f64, achieved: f64, target: f64 },

    #[error(
        "plug-in problem needs ~{needed} bytes of distortion/kernel storage, budget is {budget} bytes; \
         the plug-in estimator scales as n^2 in the sample count, subsample the data or raise the budget"
    )]
    MemoryBudget { needed: u64, budget: u64 },

    #[error("bad format at byte offset {offset}: {detail}")]
    Format { offset: u64, detail: String },

    #[error("unsupported {what} version {version}")]
    UnsupportedVersion { what: &'static str, version: u32 },

    #[error("digest mismatch: {0}")]
    DigestMismatch(String),

    #[error("malformed bitstream: {0}")]
    Bitstream(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(offset: u64, detail: impl Into<String>) -> Self {
        Error::Format {
            offset,
            detail: detail.into(),
        }
    }
}
