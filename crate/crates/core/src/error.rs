use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// One failed scenario invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Dotted path of the offending field, e.g. `floorplan.exits[2].segment`.
    pub field: String,
    pub invariant: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, invariant: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            invariant: invariant.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.invariant)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: parse error at line {line}, column {column}: {message}")]
    Parse {
        context: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("scenario failed validation:\n{}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("could not place agent {agent} in spawn region {region} after {attempts} attempts (region overdense?)")]
    Placement {
        region: usize,
        agent: usize,
        attempts: usize,
    },

    #[error("agent {agent} could not be given knowledge of any exit")]
    NoKnowledge { agent: usize },

    #[error("trapped population at t = {t_s:.2} s: {remaining} agents and no open exit")]
    Trapped { t_s: f64, remaining: usize },

    #[error("non-finite force on agent {agent} at t = {t_s:.2} s (time step too large or overlap blow-up)")]
    NonFiniteForce { agent: u32, t_s: f64 },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("malformed CSV {context} line {line}: {message}")]
    Csv {
        context: String,
        line: usize,
        message: String,
    },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| format!("  - {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, e: serde_json::Error) -> Self {
        Error::Parse {
            context: context.into(),
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }

    /// Runtime halts of the simulation (as opposed to bad input).
    pub fn is_runtime_halt(&self) -> bool {
        matches!(self, Error::Trapped { .. } | Error::NonFiniteForce { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
