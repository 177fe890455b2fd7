//! Crate-wide error type.
//!
//! Geometric evaluators fail in a small number of well-defined ways
//! (chart poles, induced metric losing rank, malformed configuration);
//! everything else is ordinary I/O.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A latitude-longitude chart was evaluated at (or within tolerance of) a pole.
    #[error("pole singularity: latitude {latitude} is within {tolerance} of the pole set")]
    PoleSingularity { latitude: f64, tolerance: f64 },

    /// The induced metric on the graph lost positive definiteness numerically.
    #[error("degenerate induced metric: smallest eigenvalue {min_eigenvalue}")]
    DegenerateMetric { min_eigenvalue: f64 },

    /// A flow step failed; carries the step index and offending node.
    #[error("step {step}, node {node}: {source}")]
    StepFailed {
        step: usize,
        node: usize,
        #[source]
        source: Box<Error>,
    },

    /// An operation needs more dimensions than the input provides.
    #[error("arity error: {context} requires n >= {needed}, got {got}")]
    Arity {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    /// A sampling constraint for an algebraic verifier cannot be realized.
    #[error("constraint error: {0}")]
    Constraint(String),

    /// Scenario configuration is invalid; `field` is the offending path.
    #[error("config error: field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// An explicit time step produced non-finite values.
    #[error("instability: non-finite value at step {step}, node {node}")]
    Instability { step: usize, node: usize },

    /// The graph condition failed: the projection Jacobian reached zero.
    #[error("graph lost: projection Jacobian <= 0 at step {step}, node {node}")]
    GraphLost { step: usize, node: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Short machine-parsable class name, used by the CLI error line.
    pub fn class(&self) -> &'static str {
        match self {
            Error::PoleSingularity { .. } => "PoleSingularity",
            Error::DegenerateMetric { .. } => "DegenerateMetric",
            Error::StepFailed { source, .. } => source.class(),
            Error::Arity { .. } => "ArityError",
            Error::Constraint(_) => "ConstraintError",
            Error::Config { .. } => "ConfigError",
            Error::Instability { .. } => "Instability",
            Error::GraphLost { .. } => "GraphLost",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
            Error::Parse(_) => "ParseError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
