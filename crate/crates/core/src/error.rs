use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient length: need at least {required} steps, series has {actual}")]
    InsufficientLength { required: usize, actual: usize },

    #[error("degenerate split: {part} split receives zero columns (fraction {fraction})")]
    DegenerateSplit { part: &'static str, fraction: f64 },

    #[error("patch longer than window: patch_len {patch_len} > lookback {lookback}")]
    PatchLongerThanWindow { patch_len: usize, lookback: usize },

    #[error("scale {index}: {source}")]
    Scale {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("undefined normalization: noise effect requires a nonzero error")]
    UndefinedNormalization,

    #[error("non-finite value at variable {variable}, step {step}")]
    NonFinite { variable: usize, step: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence {
        epoch: usize,
        batch: usize,
        loss: f64,
    },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing run output: {0}")]
    MissingRun(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(
        context: impl Into<String>,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
