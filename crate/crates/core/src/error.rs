use thiserror::Error;

/// Errors raised by the solver, the analysis passes and the metric.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NovikovError {
    /// Invalid user-facing configuration (grid bounds, datum parameters, tolerances).
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (length mismatch, order out of range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced a non-finite value or failed to converge.
    #[error("numerical error at node {node}: {message}")]
    Numerical { node: usize, message: String },

    /// The state left the admissible region between steps.
    #[error("guard violation at t = {t}: {message}")]
    Guard { t: f64, message: String },

    /// A state does not satisfy the invariants an operation relies on.
    #[error("invalid state: {0}")]
    State(String),

    /// A query point outside the represented range.
    #[error("query out of range: {0}")]
    Query(String),

    /// Too few samples or a degenerate least-squares system.
    #[error("fit failed: {0}")]
    Fit(String),

    /// A straight-line path left the admissible region.
    #[error("path error at theta = {theta}: {message}")]
    Path { theta: f64, message: String },

    /// Eulerian quadrature requested on a field with masked derivatives.
    #[error("masked nodes present in x-ranges {ranges:?}")]
    Masked { ranges: Vec<(f64, f64)> },
}

pub type Result<T> = std::result::Result<T, NovikovError>;
