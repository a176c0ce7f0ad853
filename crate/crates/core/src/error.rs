use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid vocabulary: {0}")]
    Vocab(String),

    #[error("invalid tag set: {0}")]
    TagSet(String),

    #[error("unknown tag {0:?}")]
    UnknownTag(String),

    #[error("overlapping entities at [{first_start}, {first_end}) and [{second_start}, {second_end})")]
    Overlap {
        first_start: usize,
        first_end: usize,
        second_start: usize,
        second_end: usize,
    },

    #[error("entity [{start}, {end}) out of bounds for sequence of length {len}")]
    EntityBounds { start: usize, end: usize, len: usize },

    #[error("invalid IOB2 sequence at position {position}: {reason}")]
    InvalidSequence { position: usize, reason: String },

    #[error("document {doc:?}: {reason}")]
    Misaligned { doc: String, reason: String },

    #[error("{what}: {len} exceeds the limit of {limit}")]
    TooLarge { what: &'static str, len: u128, limit: u128 },

    #[error("XML error at byte {position}: {message}")]
    Xml { position: u64, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{0}")]
    Data(String),

    #[error("model checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
