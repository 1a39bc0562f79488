use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("structural mismatch: {0}")]
    Structural(String),
    #[error("unsupported capability: {0}")]
    Unsupported(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("estimate unreliable: {0}")]
    Reliability(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("bad hyperparameter {name}: {why}")]
    Hyperparam { name: String, why: String },
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
