//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CauseError {
    /// Vector or matrix shapes do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A text input could not be parsed; carries the 1-based line number.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Invalid configuration (unknown key, bad value, unsupported method).
    #[error("config error: {0}")]
    Config(String),

    /// A value outside its documented domain (rating range, negative alpha, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Empty or otherwise unusable data where events were required.
    #[error("data error: {0}")]
    Data(String),

    /// Training produced a non-finite or runaway parameter.
    #[error("divergence at step {step}: {msg}")]
    Divergence { step: usize, msg: String },

    /// A denominator that must be nonzero was zero.
    #[error("singularity: {0}")]
    Singularity(String),

    /// A metric that needs both classes saw only one.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Model file cannot be decoded; offset is the byte position where
    /// decoding stopped.
    #[error("model format error at byte {offset}: {msg}")]
    ModelFormat { offset: u64, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Wraps an inner error with the pipeline stage that raised it.
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CauseError>,
    },
}

impl CauseError {
    pub fn at_stage(self, stage: &'static str) -> CauseError {
        CauseError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, unwrapping stage labels.
    pub fn root(&self) -> &CauseError {
        match self {
            CauseError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, CauseError>;
