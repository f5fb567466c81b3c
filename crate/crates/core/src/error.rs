use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("item {item} is outside the vocabulary of size {vocab}")]
    UnknownItem { item: usize, vocab: usize },
    #[error("not a permutation: {0}")]
    NotAPermutation(String),
    #[error("vocabulary mismatch: {left} vs {right}")]
    VocabMismatch { left: usize, right: usize },
    #[error("unsupported norm q={0}; expected 0, 1 or 2")]
    UnsupportedNorm(u32),
    #[error("NaN encountered in {0}")]
    NaN(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("layer is frozen")]
    FrozenLayer,
    #[error("data error: {0}")]
    Data(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}
