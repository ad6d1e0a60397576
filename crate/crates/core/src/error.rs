use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("alphabet mismatch: {left:?} vs {right:?}")]
    AlphabetMismatch { left: Vec<String>, right: Vec<String> },

    #[error("not quantized at n = {n}: {what}")]
    NotQuantized { n: u64, what: String },

    #[error("infeasible budget for symbol pair ({b}, {a}): {budget} edges requested, only {capacity} admissible")]
    Infeasible {
        b: String,
        a: String,
        budget: u64,
        capacity: u64,
    },

    #[error("symbol {symbol} has no vertices but receives {balls} balls")]
    EmptySymbolClass { symbol: String, balls: u64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} budget exceeded: {count} > {limit}")]
    BudgetExceeded {
        what: &'static str,
        count: u128,
        limit: u128,
    },

    #[error("logarithm of zero mass at {0}")]
    ZeroMassLog(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
