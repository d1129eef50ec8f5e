use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("{op}: {msg}")]
    Contract { op: &'static str, msg: String },

    #[error("{path}:{line}: {kind}")]
    Parse {
        path: String,
        line: usize,
        kind: ParseErrorKind,
    },

    #[error("invalid labels: {0}")]
    Labels(String),

    #[error("degenerate trial set: {0}")]
    DegenerateTrials(String),

    #[error("unknown instance id `{0}`")]
    UnknownInstance(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch} (total {loss}, ce {ce}, oc {oc})")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        loss: f64,
        ce: f64,
        oc: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// What went wrong on a specific line of a text file.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("cannot parse `{0}` as a number")]
    Number(String),
    #[error("non-finite value `{0}`")]
    NonFinite(String),
    #[error("duplicate id `{0}`")]
    Duplicate(String),
    #[error("unknown token `{0}`")]
    Token(String),
    #[error("expected {expected} rows, found {found}")]
    RowCount { expected: usize, found: usize },
    #[error("trailing content after declared rows")]
    Trailing,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Contract {
            op,
            msg: msg.into(),
        }
    }

    /// True for errors caused by input data rather than numerics or API misuse.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Labels(_)
                | Error::DegenerateTrials(_)
                | Error::UnknownInstance(_)
                | Error::Io { .. }
        )
    }

    pub fn is_numeric_failure(&self) -> bool {
        matches!(self, Error::NonFiniteLoss { .. })
    }
}
