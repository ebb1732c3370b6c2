use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("line {line}: missing or invalid field `{field}`")]
    MissingField { line: usize, field: String },

    #[error("line {line}: passage `{id}` has empty text")]
    EmptyText { line: usize, id: String },

    #[error("duplicate passage id `{0}`")]
    DuplicateId(String),

    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,

    #[error("unknown passage id `{0}`")]
    UnknownPassage(String),

    #[error("malformed {format} line {line}: {reason}")]
    Trec {
        format: &'static str,
        line: usize,
        reason: String,
    },

    #[error("unsupported index format: {0}")]
    IndexFormat(String),

    #[error("gateway error{}: {message}", query_id.as_deref().map(|q| format!(" (query {q})")).unwrap_or_default())]
    Gateway {
        query_id: Option<String>,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0} is undefined")]
    Undefined(&'static str),

    #[error("query `{0}` skipped: {1}")]
    Skipped(String, String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a query id to gateway errors that lack one.
    pub fn with_query(self, id: &str) -> Self {
        match self {
            Error::Gateway {
                query_id: None,
                message,
            } => Error::Gateway {
                query_id: Some(id.to_owned()),
                message,
            },
            other => other,
        }
    }

    pub(crate) fn gateway(query_id: Option<&str>, message: impl Into<String>) -> Self {
        Error::Gateway {
            query_id: query_id.map(str::to_owned),
            message: message.into(),
        }
    }
}
