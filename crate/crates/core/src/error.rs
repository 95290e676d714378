use std::path::PathBuf;

use thiserror::Error;

use crate::schema::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse error classes used by the service and CLI layers to pick a status code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorClass {
    BadRequest,
    NotFound,
    IllegalState,
    Validation,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("attribute `{attribute}`: {reason}")]
    Schema { attribute: String, reason: String },

    #[error("invalid schema document: {0}")]
    SchemaDocument(String),

    #[error("case `{case_id}` failed validation: {report}")]
    Validation { case_id: String, report: ValidationReport },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("unknown grade `{label}` (scale: {scale})")]
    UnknownGrade { label: String, scale: String },

    #[error("attribute `{attribute}`: {reason}")]
    Value { attribute: String, reason: String },

    #[error("attribute `{0}` is text and never compared")]
    TextComparison(String),

    #[error("no comparable attributes")]
    NoComparableAttributes,

    #[error("empty case base")]
    EmptyCaseBase,

    #[error("k must be at least 1")]
    ZeroK,

    #[error("{what} `{id}` not found")]
    NotFound { what: &'static str, id: String },

    #[error("{what} `{id}` already exists")]
    AlreadyExists { what: &'static str, id: String },

    #[error("duplicate case id `{id}` at positions {first} and {second}")]
    DuplicateId { id: String, first: usize, second: usize },

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error("case base schema `{found}` does not match `{expected}`")]
    SchemaMismatch { expected: String, found: String },

    #[error("case `{0}` is not among the retrieved results")]
    NotInResults(String),

    #[error("operation `{operation}` is not allowed in state {state}")]
    IllegalState {
        state: crate::cycle::SessionState,
        operation: crate::cycle::Operation,
    },

    #[error("schema has no graded solution attribute")]
    NoOutcomeAttribute,

    #[error("no labeled neighbors")]
    NoLabeledNeighbors,

    #[error("leave-one-out needs at least 2 labeled cases, found {0}")]
    InsufficientLabeled(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Schema { .. }
            | Error::SchemaDocument(_)
            | Error::Parse { .. }
            | Error::ZeroK
            | Error::AlreadyExists { .. }
            | Error::SchemaMismatch { .. } => ErrorClass::BadRequest,
            Error::NotFound { .. } => ErrorClass::NotFound,
            Error::IllegalState { .. } => ErrorClass::IllegalState,
            Error::Validation { .. }
            | Error::InvalidQuery(_)
            | Error::UnknownGrade { .. }
            | Error::Value { .. }
            | Error::TextComparison(_)
            | Error::NoComparableAttributes
            | Error::EmptyCaseBase
            | Error::DuplicateId { .. }
            | Error::NotInResults(_)
            | Error::NoOutcomeAttribute
            | Error::NoLabeledNeighbors
            | Error::InsufficientLabeled(_) => ErrorClass::Validation,
            Error::Io { .. } => ErrorClass::Io,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
