use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("buffer size {k} with {alphabet} importance values needs {nodes} tree nodes, above the cap of {cap}")]
    TreeTooLarge {
        k: usize,
        alphabet: usize,
        nodes: u128,
        cap: u128,
    },

    #[error("state entry {0} is not in the importance alphabet")]
    OutOfAlphabet(String),

    #[error("unsupported model: {0}")]
    Unsupported(String),

    #[error("policy iteration did not converge after {iters} iterations ({changed} actions still changing)")]
    NoConvergence { iters: usize, changed: usize },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("infeasible action {action} for buffer state {state}")]
    InfeasibleAction { action: usize, state: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
