use thiserror::Error;

/// Errors raised by the numerical routines and the command-line runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A sample average sits at or beyond the range of a mean function, so
    /// it cannot be inverted.
    #[error("saturation: value {value} is outside the open range ({lower}, {upper})")]
    Saturation { value: f64, lower: f64, upper: f64 },

    /// Every bracket saturates at the requested exposure.
    #[error("all brackets saturated at theta = {theta}")]
    AllSaturated { theta: f64 },

    /// A contributing bracket could not be inverted.
    #[error("bracket {index} saturated: {source}")]
    BracketSaturated {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// A root finder or series failed to converge.
    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures caused by numerics (saturation, convergence) rather
    /// than by bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Saturation { .. }
                | Error::AllSaturated { .. }
                | Error::BracketSaturated { .. }
                | Error::Convergence(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
