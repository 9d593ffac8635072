use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs whose dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// Inputs that violate a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),
    /// A trial that trims down to nothing.
    #[error("degenerate trial: {0}")]
    DegenerateTrial(String),
    /// Data with no spread (e.g. min == max when fitting a scaler).
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    /// A loss or gradient became NaN or infinite; training stops.
    #[error("numerical abort: {0}")]
    NonFinite(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
