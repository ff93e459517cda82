use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("format error at line {line}: {reason}")]
    Format { line: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero-norm vector")]
    ZeroVector,

    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("missing embedding `{key}` in {store} store")]
    MissingEmbedding { store: String, key: String },

    #[error("instance `{0}` has no captions")]
    MissingCaptions(String),

    #[error("training data contains a single class")]
    DegenerateData,

    #[error("classifier client unavailable: {0}")]
    ClientUnavailable(String),

    #[error("unparseable classifier response: {0}")]
    UnparseableResponse(String),

    #[error("empty input")]
    EmptyInput,

    #[error("all fusion weights are zero")]
    AllZeroWeights,

    #[error("non-finite score at candidate {0}")]
    NonFiniteScore(usize),

    #[error("stream mismatch: {0}")]
    StreamMismatch(String),

    #[error("duplicate key `{0}`")]
    DuplicateKey(String),

    #[error("not a permutation: {0}")]
    NotAPermutation(String),

    #[error("missing gold data: {0}")]
    MissingGold(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("instance `{id}`: {source}")]
    Instance {
        id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(line: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            line,
            reason: reason.into(),
        }
    }

    pub(crate) fn in_instance(self, id: &str) -> Self {
        match self {
            e @ Error::Instance { .. } => e,
            other => Error::Instance {
                id: id.to_string(),
                source: Box::new(other),
            },
        }
    }

    /// Errors caused by bad inputs (files, configs, data) as opposed to bugs.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Instance { source, .. } => source.is_input_error(),
            Error::Io { .. }
            | Error::MissingColumn(_)
            | Error::MalformedRow { .. }
            | Error::Format { .. }
            | Error::DimensionMismatch { .. }
            | Error::MissingEmbedding { .. }
            | Error::MissingCaptions(_)
            | Error::DegenerateData
            | Error::DuplicateKey(_)
            | Error::NotAPermutation(_)
            | Error::MissingGold(_)
            | Error::Config(_)
            | Error::StreamMismatch(_)
            | Error::ClientUnavailable(_)
            | Error::UnparseableResponse(_)
            | Error::NonPositiveTemperature(_)
            | Error::EmptyInput
            | Error::AllZeroWeights => true,
            Error::ZeroVector | Error::NonFiniteScore(_) => false,
        }
    }
}
