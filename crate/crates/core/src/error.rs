use thiserror::Error;

/// Errors raised by the model, design, and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A caller-side precondition was violated (ordering, dimensions).
    #[error("contract violation: {0}")]
    Contract(String),
    /// A numerical solver found no admissible solution.
    #[error("solver failed: {0}")]
    Solver(String),
    /// No feasible design exists within the requested limits.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// Frequency derivatives were requested from a plain trajectory.
    #[error("terminal state carries no sensitivity states")]
    MissingSensitivity,
    /// Zero search disagreed with the argument-principle count.
    #[error("zero search: {0}")]
    ZeroSearch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
