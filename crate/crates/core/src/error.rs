use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid transition at (state {state}, action {action}): {reason}")]
    InvalidTransition {
        state: usize,
        action: usize,
        reason: String,
    },

    #[error("reward {value} at state {state} is outside the allowed range [0, {bound}]")]
    InvalidReward {
        state: usize,
        value: f64,
        bound: f64,
    },

    #[error("discount {0} must lie strictly inside (0, 1)")]
    InvalidDiscount(f64),

    #[error("policy maps state {state} to action {action}, but only {num_actions} actions exist")]
    InvalidPolicy {
        state: usize,
        action: usize,
        num_actions: usize,
    },

    #[error("state {0} is out of range")]
    InvalidState(usize),

    #[error("transition at (state {state}, action {action}) has more than two successors; apply split_to_two_support first")]
    NotTwoSupport { state: usize, action: usize },

    #[error("models differ outside their transitions: {0}")]
    StructuralMismatch(String),

    #[error("moment order set {0:?} is not a prefix of 0, 2, 6, 14, ...")]
    InvalidOrderSet(Vec<u32>),

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed document: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
