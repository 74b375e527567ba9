use thiserror::Error;

use crate::topology::Controller;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("non-finite value for {what}: {value}")]
    NonFinite { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("config parse error at index {index}: {reason}")]
    ConfigParse { index: usize, reason: String },

    #[error("spawn overfill: {requested} vehicles do not fit; max feasible density is {max_density:.1} veh/km")]
    Overfill { requested: f64, max_density: f64 },

    #[error("trace mismatch: {0}")]
    TraceMismatch(String),

    #[error("missing homogeneous baseline for controller {0:?}")]
    MissingBaseline(Controller),

    #[error("no braking onset found in trace")]
    NoBrakingOnset,

    #[error("degenerate metric: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

pub(crate) fn finite(what: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(CoreError::NonFinite { what, value })
    }
}
