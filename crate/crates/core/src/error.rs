use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature count {0} is unsupported (need 2 <= M <= {max})", max = crate::coalition::MAX_FEATURES)]
    FeatureCount(usize),

    #[error("layer {layer} is invalid for M = {m} (valid: 1..={max})", max = m / 2)]
    InvalidLayer { m: usize, layer: usize },

    #[error("budget {budget} is out of range for M = {m} (valid: 2..={max})")]
    InvalidBudget { m: usize, budget: u64, max: u64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("model evaluation failed on batch {batch}: {message}")]
    Model { batch: usize, message: String },

    #[error("normal equations are rank deficient ({context})")]
    RankDeficient { context: String },

    #[error("exact enumeration refused: M = {m} needs {evaluations} evaluations (cap is M <= {cap})")]
    OracleCap { m: usize, cap: usize, evaluations: u128 },

    #[error("game table has no value for coalition {0}")]
    MissingCoalition(String),

    #[error("metric undefined: {0}")]
    Metric(String),
}
