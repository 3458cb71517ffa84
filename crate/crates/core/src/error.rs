use thiserror::Error;

/// Errors raised by the numerical and orchestration layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input violated a structural invariant (dimensions, ordering, bounds).
    #[error("validation error: {0}")]
    Validation(String),

    /// A scalar argument fell outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// The constraint set admits no feasible point.
    #[error("configuration error: {0}")]
    Configuration(String),

    /// Power iteration ran out of iterations.
    #[error("eigen solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    /// Eigen solver failure inside one optimizer restart.
    #[error("restart {restart}: {source}")]
    Restart {
        restart: usize,
        #[source]
        source: Box<Error>,
    },

    /// A supervisor was handed a report that does not belong to the current stage.
    #[error("protocol error: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, Error>;
