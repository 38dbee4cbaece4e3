use std::fmt;

use thiserror::Error;

/// A single failed check, located by a dotted path into the input document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid input: {}", join(.0))]
    Invalid(Vec<Violation>),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("non-integrable tail: {0}")]
    Divergent(String),

    #[error("horizon: {0}")]
    Horizon(String),

    #[error("unstable queue{}: load {load} >= service rate {rate}", .slot.as_ref().map(|s| format!(" at slot '{s}'")).unwrap_or_default())]
    Unstable {
        slot: Option<String>,
        load: f64,
        rate: f64,
    },

    #[error("infeasible rate split: {0}")]
    Infeasible(String),

    #[error("allocation: {0}")]
    Allocation(String),

    #[error("exhaustive search refused: {0}")]
    Combinatorial(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invalid(vec![Violation::new(path, message)])
    }

    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::Invalid(_) | Error::InvalidArgument(_) | Error::Io(_) => 1,
            Error::Divergent(_)
            | Error::Horizon(_)
            | Error::Unstable { .. }
            | Error::Infeasible(_)
            | Error::Allocation(_) => 2,
            Error::Combinatorial(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
