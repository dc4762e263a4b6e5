use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("out of range: {0}")]
    Range(String),

    /// The optimal path reached the edge of the simulated window, so the
    /// window may have constrained it.
    #[error("window [{x_min}, {x_max}] too small: {detail}")]
    WindowTooSmall {
        x_min: i64,
        x_max: i64,
        detail: String,
    },

    #[error("enumeration guard: n = {n} exceeds the limit {limit}")]
    Guard { n: usize, limit: usize },

    #[error("budget exceeded: {needed} cell updates requested, budget is {budget}")]
    Budget { needed: u128, budget: u128 },

    #[error("structural error: {0}")]
    Structural(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Param(msg.into()))
}

pub(crate) fn range<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Range(msg.into()))
}
