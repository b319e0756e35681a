use thiserror::Error;

/// Errors raised by the token pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value violated its invariants.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Even the smallest per-frame allocation exceeds the video budget.
    #[error("token budget {budget} too small: minimum achievable total is {minimum_total}")]
    BudgetTooSmall { budget: usize, minimum_total: usize },

    /// Available tokens cannot fill the requested mixture window.
    #[error("infeasible mixture: requested {requested} tokens but only {achievable} available")]
    InfeasibleMixture { requested: usize, achievable: usize },

    /// A packing item does not fit in an empty window.
    #[error("item {id:?} has {length} tokens, exceeding window capacity {capacity}")]
    OversizeItem { id: String, length: usize, capacity: usize },

    /// Grounding markup failed to parse.
    #[error("grounding parse error at byte {offset}: {reason}")]
    Parse { offset: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
