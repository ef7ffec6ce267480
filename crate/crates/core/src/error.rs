use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the simulator and the DSP chain.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("phase unwrap failed at sample {index}: step of {step:.3} rad")]
    PhaseUnwrap { index: usize, step: f64 },

    #[error("transfer matrix assembly is missing channels {0:?}")]
    MissingChannels(Vec<usize>),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
