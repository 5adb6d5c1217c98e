use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("coordinate {0} has no observations yet")]
    NoObservations(usize),

    #[error("coordinate {index} out of range for {len} coordinates")]
    CoordinateOutOfRange { index: usize, len: usize },

    #[error("statistic keys do not match the active set")]
    KeyMismatch,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("value {value} at position {index} is outside [0, 1]")]
    OutOfUnitInterval { index: usize, value: f64 },

    #[error("need at least {min} observations, got {found}")]
    TooFewObservations { min: usize, found: usize },

    #[error("no detectable alternative component (fallback attempted: {fallback_attempted})")]
    NoAlternativeComponent { fallback_attempted: bool },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
