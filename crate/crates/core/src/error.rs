use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("dressed levels cannot be tracked: {0}")]
    Degeneracy(String),

    #[error("coincident spins {i} and {j}")]
    SingularSeparation { i: usize, j: usize },

    #[error("spin {spin} has no non-zero coupling")]
    ZeroCoupling { spin: usize },

    #[error("invalid pulse sequence: {0}")]
    InvalidSequence(String),

    #[error("system of {n} spins exceeds the {limit}-spin limit of the {what}")]
    TooLarge { n: usize, limit: usize, what: &'static str },

    #[error("empty schedule")]
    EmptySchedule,

    #[error("{0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name: name.to_string(), reason: reason.into() }
}
