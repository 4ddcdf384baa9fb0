use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("overflow: {what} exceeds the f64 range (threshold {threshold:e})")]
    Overflow { what: String, threshold: f64 },

    #[error("no convergence after {iterations} iterations (last increment {last:e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        history: Vec<f64>,
        /// Theoretical bound on each increment, when one is available.
        envelope: Vec<f64>,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error at offset {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Overflow { .. } => "overflow",
            Error::NonConvergence { .. } => "non-convergence",
            Error::Numeric(_) => "numeric",
            Error::Precondition(_) => "precondition",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::InsufficientData(_) => "insufficient-data",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
