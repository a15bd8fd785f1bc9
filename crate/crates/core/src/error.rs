use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("failed to converge: {0}")]
    Convergence(String),

    /// No working radius satisfied the perturbation bounds on the sample.
    #[error("calibration failed at {point:?}: {message}")]
    Calibration { message: String, point: Vec<f64> },

    /// Every maximal minor fell under its cutoff at a point off the singular set.
    #[error("covering violated at xi = {xi}, x = {point:?}")]
    CoveringViolated { xi: f64, point: Vec<f64> },

    #[error("trajectory left the ball of radius {radius} at t = {t}, point {point:?}")]
    DomainExit { t: f64, point: Vec<f64>, radius: f64 },

    #[error("step size underflow at t = {t} (h = {step:e})")]
    StepUnderflow { t: f64, step: f64 },

    /// A numerical identity that must hold by construction did not.
    #[error("inconsistent result: {0}")]
    Inconsistent(String),

    #[error("construction error: {0}")]
    Construction(String),

    /// `message` already carries the location when it came from the JSON reader.
    #[error("parse error: {message}")]
    Parse {
        message: String,
        line: Option<usize>,
        column: Option<usize>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            message: e.to_string(),
            line: Some(e.line()),
            column: Some(e.column()),
        }
    }
}
