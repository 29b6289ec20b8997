use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("value {value} outside admissible range [{lower}, {upper}] for {what}")]
    OutOfRange {
        what: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("setup error: {0}")]
    Setup(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("time integration unstable: {0}")]
    Instability(String),

    #[error("pattern classification: {0}")]
    Classification(String),

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
