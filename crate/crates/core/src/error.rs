use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("time {t} outside [0, {horizon}]")]
    OutOfRange { t: f64, horizon: f64 },

    #[error(
        "{candidates} candidate bonds exceed the enumeration budget {budget}; \
         use the altmin backend or raise solver.budget"
    )]
    BudgetExceeded { candidates: usize, budget: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e}){}", step_suffix(.step))]
    NonConvergence {
        step: Option<usize>,
        iterations: usize,
        residual: f64,
        /// Last iterate (nodal values) when one is available.
        last_iterate: Option<Vec<f64>>,
    },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn step_suffix(step: &Option<usize>) -> String {
    match step {
        Some(k) => format!(" at step {k}"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Attach a time-step index to a nonconvergence error.
    pub fn at_step(self, k: usize) -> Self {
        match self {
            Error::NonConvergence {
                iterations,
                residual,
                last_iterate,
                ..
            } => Error::NonConvergence {
                step: Some(k),
                iterations,
                residual,
                last_iterate,
            },
            other => other,
        }
    }
}
