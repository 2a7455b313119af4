use thiserror::Error;

use crate::kernel::KernelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("no path from {src} to {dst}")]
    NoPathFound { src: String, dst: String },
    #[error("reservation failed: `{device}` has no idle {kind} memory")]
    ReservationFailure { device: String, kind: String },
    #[error("topology: {0}")]
    Topology(String),
    #[error("config: {0}")]
    Config(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_prob(name: &'static str, value: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must lie in [0, 1]",
        })
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<f64> {
    if value >= 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and non-negative",
        })
    }
}
