use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("Newton iteration did not converge after {iters} iterations (residual {residual:e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("singular linear system at row {row}")]
    Singular { row: usize },

    #[error("sample {index}: {reason}")]
    InvalidSample { index: usize, reason: &'static str },

    #[error("steady state {state}: {source}")]
    InState {
        state: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_state(self, state: usize) -> Self {
        Error::InState {
            state,
            source: Box::new(self),
        }
    }
}
