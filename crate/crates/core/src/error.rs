use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("i/o: {0}")]
    Stream(#[from] io::Error),

    #[error("unsupported format header {found:?} (expected {expected:?})")]
    VersionMismatch { expected: String, found: String },

    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: label {value} outside 1..=4")]
    LabelOutOfRange { line: usize, value: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid dictionary: {0}")]
    InvalidDictionary(String),

    #[error("insufficient corpus: {0}")]
    InsufficientCorpus(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("network: {0}")]
    Network(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
