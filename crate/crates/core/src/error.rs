use thiserror::Error;

use crate::geometry::Condition;

/// Errors returned across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid value: {0}")]
    Validation(String),

    #[error("shape mismatch: expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("radii violate {condition}: {detail}")]
    Inadmissible { condition: Condition, detail: String },

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("bad parameter: {0}")]
    Parameter(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("no termination after {iterations} iterations (volumes: {trace:?})")]
    NonTermination { iterations: usize, trace: Vec<f64> },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
