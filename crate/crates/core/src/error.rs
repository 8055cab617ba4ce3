use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0} (only 1 and 2 are implemented)")]
    UnsupportedDimension(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("grid resolution must be odd and >= 5, got {0}")]
    BadResolution(usize),

    #[error("stencil leaves the grid at node index {node} along direction ({dx}, {dy})")]
    OutOfStencil { node: usize, dx: i32, dy: i32 },

    #[error("fields live on different domains ({0})")]
    DomainMismatch(String),

    #[error("{context}: no convergence after {iterations} iterations (last residual {last:.3e})")]
    NonConvergence {
        context: String,
        iterations: usize,
        last: f64,
        /// residual (or change) sup-norm per iteration
        history: Vec<f64>,
    },

    #[error("divergence detected ({0})")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
