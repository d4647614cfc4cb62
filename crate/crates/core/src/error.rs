use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty query: {0} has no terms")]
    EmptyQuery(String),

    #[error("missing documents for reference ids: {}", .0.join(", "))]
    MissingDocuments(Vec<String>),

    #[error("training data contains a single class ({n_pos} positive, {n_neg} negative)")]
    SingleClass { n_pos: usize, n_neg: usize },

    #[error("corpus has no instances")]
    EmptyCorpus,

    #[error("cannot split {n} instances into {k} folds")]
    TooFewInstances { n: usize, k: usize },

    #[error("nothing to aggregate")]
    NoResults,

    #[error("unknown {kind} `{name}` (available: {})", .available.join(", "))]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: Vec<String>,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: malformed JSON: {source}", .path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{}: malformed config: {message}", .path.display())]
    Config { path: PathBuf, message: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error: 1 usage/config, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownStrategy { .. }
            | Error::InvalidParameter(_)
            | Error::Config { .. }
            | Error::Usage(_) => 1,
            Error::EmptyQuery(_)
            | Error::MissingDocuments(_)
            | Error::SingleClass { .. }
            | Error::EmptyCorpus
            | Error::TooFewInstances { .. }
            | Error::NoResults
            | Error::InvalidData(_)
            | Error::Io { .. }
            | Error::Json { .. } => 2,
            Error::Internal(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
