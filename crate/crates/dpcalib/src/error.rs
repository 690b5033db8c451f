//! Error type shared by all calibration layers.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An elicitation target violates a hard feasibility bound.
    #[error("infeasible target: {0}")]
    Infeasible(String),

    /// An iterative scheme exhausted its budget without converging.
    #[error("convergence failure: {0}")]
    Convergence(String),

    /// A numerical evaluation produced a non-finite or inconsistent result.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Malformed user input (CLI flags, grids, file paths).
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
