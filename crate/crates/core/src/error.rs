use thiserror::Error;

use crate::harvester::HarvesterParams;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A simulation or query setting is unusable (step too coarse, unknown
    /// parameter path, ...).
    #[error("configuration error: {0}")]
    Config(String),

    #[error(
        "calibration did not converge after {iterations} iterations \
         (best max relative residual {best_residual:.3e})"
    )]
    Calibration {
        iterations: usize,
        best_residual: f64,
        best: Box<HarvesterParams>,
    },

    /// Every violated scenario invariant, one entry each.
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
