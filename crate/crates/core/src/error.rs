use thiserror::Error;

#[derive(Debug, Error)]
pub enum MgolError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("label {label} is not in the action set {actions:?}")]
    InvalidLabel { label: i32, actions: Vec<i32> },

    #[error("context {index} is outside the universe of size {m}")]
    ContextOutOfRange { index: usize, m: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("round {got} recorded after round {last}; rounds must be strictly increasing")]
    OutOfOrderRound { last: usize, got: usize },

    #[error("batch learner failed: {0}")]
    Learner(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("malformed csv: {0}")]
    MalformedCsv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = MgolError> = std::result::Result<T, E>;
