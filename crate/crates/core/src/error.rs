use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Failure while writing or reading a line-delimited trace. `record` is
    /// the 1-based line number being processed.
    #[error("I/O error at record {record}: {source}")]
    TraceIo {
        record: usize,
        #[source]
        source: io::Error,
    },

    #[error("I/O error on {path}: {source}")]
    FileIo {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error{}: {message}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    Validation { line: Option<usize>, message: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("gate protocol error: {0}")]
    Protocol(String),

    #[error("non-finite activation in layer {layer}")]
    Numeric { layer: &'static str },

    #[error("training error: {0}")]
    Training(String),

    #[error("invalid scenario: {}", .0.join("; "))]
    Scenario(Vec<String>),

    #[error("unknown scenario `{name}` (available: {})", available.join(", "))]
    UnknownScenario {
        name: String,
        available: Vec<&'static str>,
    },

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn validation(message: impl Into<String>) -> Self {
        Error::Validation {
            line: None,
            message: message.into(),
        }
    }

    pub(crate) fn file(path: &std::path::Path, source: io::Error) -> Self {
        Error::FileIo {
            path: path.display().to_string(),
            source,
        }
    }

    /// Short machine-readable tag, used in the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::TraceIo { .. } | Error::FileIo { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Parameter(_) => "parameter",
            Error::Protocol(_) => "protocol",
            Error::Numeric { .. } => "numeric",
            Error::Training(_) => "training",
            Error::Scenario(_) | Error::UnknownScenario { .. } => "scenario",
            Error::Metrics(_) => "metrics",
            Error::Config(_) => "config",
        }
    }
}
