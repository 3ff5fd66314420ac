use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("action index {0} is out of range (expected 0..100)")]
    ActionIndex(usize),

    #[error("action ({dx}, {dy}, patrol {patrol}) is out of range")]
    ActionSpec { dx: i32, dy: i32, patrol: u32 },

    #[error("dispatcher returned invalid action {index} for courier {courier} at t={time:.3}")]
    InvalidDispatch { courier: usize, time: f64, index: usize },

    #[error("request {id}: illegal status transition {from} -> {to}")]
    StatusTransition {
        id: u64,
        from: &'static str,
        to: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("trajectory for courier {0} is incomplete")]
    IncompleteTrajectory(usize),

    #[error("invalid transition: {0}")]
    Transition(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
