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

    #[error("format error: {0}")]
    Format(String),

    /// A non-finite or otherwise unusable numeric value. `row`/`col` are
    /// zero-based positions in the source matrix when known.
    #[error("value error{}: {msg}", location(*row, *col))]
    Value {
        row: Option<usize>,
        col: Option<usize>,
        msg: String,
    },

    #[error("schema error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Schema { line: Option<usize>, msg: String },

    #[error("alignment error{}: {msg}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Alignment { row: Option<usize>, msg: String },

    #[error("missing resource: {0}")]
    MissingResource(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty node {0}: no routed training documents")]
    EmptyNode(u32),

    #[error("incomplete artifact: {0}")]
    IncompleteArtifact(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn location(row: Option<usize>, col: Option<usize>) -> String {
    match (row, col) {
        (Some(r), Some(c)) => format!(" at row {r}, column {c}"),
        (Some(r), None) => format!(" at row {r}"),
        (None, Some(c)) => format!(" at column {c}"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn value(msg: impl Into<String>) -> Self {
        Error::Value {
            row: None,
            col: None,
            msg: msg.into(),
        }
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema {
            line: None,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
