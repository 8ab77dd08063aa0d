use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("structural error: {0}")]
    Structure(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("degenerate signal: {0}")]
    Degenerate(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("training error: {0}")]
    Training(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Parse { .. }
            | Error::Structure(_)
            | Error::Format(_)
            | Error::Io(_)
            | Error::Shape(_)
            | Error::InvalidScenario(_)
            | Error::Range(_) => 3,
            Error::Numeric(_)
            | Error::Sampling(_)
            | Error::Degenerate(_)
            | Error::Training(_) => 4,
        }
    }
}
