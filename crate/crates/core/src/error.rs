use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} = {value} is not a positive integer multiple of dt = {dt}")]
    NonIntegerRatio { what: &'static str, value: f64, dt: f64 },

    #[error("control signal covers {available} integration steps, {required} needed")]
    SignalTooShort { available: usize, required: usize },

    #[error("trajectory diverged at t = {time}")]
    Divergence { time: f64 },

    #[error("feedback value leaves the control range at t = {time}")]
    RangeViolation { time: f64 },

    #[error("control range is unbounded; truncate it to a box first")]
    UnboundedControlRange,

    #[error("{} grid point(s) covered by no candidate at horizon {horizon}", points.len())]
    Infeasible { horizon: f64, points: Vec<usize> },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("discriminant {0} is not positive")]
    Discriminant(f64),

    #[error("trajectory from grid point {index} does not approach the equilibrium")]
    NonAttraction { index: usize },

    #[error("synthesis failed: {0}")]
    SynthesisFailed(String),

    #[error("closed loop leaves the envelope at {} grid point(s)", violations.len())]
    Precondition { violations: Vec<(usize, f64)> },

    #[error("grid is coarser than the shadowing radius: every seed covers only itself at horizon {horizon}")]
    GridTooCoarse { horizon: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
