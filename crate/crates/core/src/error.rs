use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// A linear solve failed. `element` points at the worst-conditioned
    /// Gram block when the failure could be traced to one.
    #[error("solver failure: {message}")]
    SolverFailure {
        message: String,
        element: Option<usize>,
    },

    #[error("Newton iteration did not converge in {iterations} iterations (last residual {:e})", history.last().copied().unwrap_or(f64::NAN))]
    NonConvergence {
        iterations: usize,
        history: Vec<f64>,
    },

    /// Wraps a failure raised while processing one stage of a driver
    /// (a refinement step or a time slice).
    #[error("{stage} {index}: {source}")]
    Stage {
        stage: &'static str,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn at_stage(self, stage: &'static str, index: usize) -> Self {
        Error::Stage {
            stage,
            index,
            source: Box::new(self),
        }
    }
}
