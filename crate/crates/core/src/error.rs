use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or argument fell outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Vector or matrix sizes disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    /// A density or gradient evaluated to a non-finite value.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("sampler initialization failed: {0}")]
    Init(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
