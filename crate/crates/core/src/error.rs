use thiserror::Error;

use crate::manifold::ManifoldSolution;
use crate::sim::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("outside the domain of the steady-state map: {0}")]
    Domain(String),
    #[error("no solution: {0}")]
    NoSolution(String),
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unsupported problem: {0}")]
    Unsupported(String),
    /// Fit stopped above its residual threshold; carries the best iterate.
    #[error("manifold fit failed: relative residual {:.3e} after {} iterations", .0.report.relative_residual, .0.report.iterations)]
    FitFailure(Box<ManifoldSolution<f64>>),
    /// State norm crossed the divergence bound; carries the partial trajectory.
    #[error("simulation diverged at t = {:.6}", .0.t.last().copied().unwrap_or(0.0))]
    Diverged(Box<Trajectory<f64>>),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
