use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("base MDP violates an invariant: {0}")]
    InvalidMdp(#[from] crate::mdp::Violation),
    #[error("invalid goal map: {0}")]
    InvalidGoalMap(String),
    #[error("invalid initial command: {0}")]
    InvalidInitialCommand(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("state out of range: {0}")]
    OutOfRange(String),
    #[error("transition from absorbing state {state:?} with action {action}, only action {fixed} is allowed")]
    AbsorbingAction {
        state: crate::command::CeState,
        action: usize,
        fixed: usize,
    },
    #[error("horizon {steps} exceeds the start command horizon {start}")]
    HorizonTooLong { steps: usize, start: usize },
    #[error("alpha must lie in [0.5, 1], got {0}")]
    AlphaOutOfRange(f64),
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("empty state set")]
    EmptyStateSet,
    #[error("environment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
