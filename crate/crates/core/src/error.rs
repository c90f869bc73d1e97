use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("enumeration needs {needed} candidates, cap is {cap}")]
    CapExceeded { needed: u128, cap: u128 },

    #[error("horizon {requested} exceeds policy horizon {available}")]
    HorizonMismatch { requested: usize, available: usize },

    #[error("exact evaluation needs a stationary or semi-stationary policy")]
    NonStationaryExact,

    #[error("measure is not in class {class}: {reason}")]
    NotInClass { class: String, reason: String },

    #[error("measures do not share a model: {0}")]
    ModelMismatch(String),

    #[error("exponential utility overflowed double range; try a smaller beta")]
    Overflow,

    #[error("value iteration did not converge after {iterations} iterations (last step {last_step:e})")]
    NotConverged {
        iterations: usize,
        last_step: f64,
        best: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
