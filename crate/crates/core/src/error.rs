use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("label vector has length {found}, expected {expected}")]
    LabelLengthMismatch { expected: usize, found: usize },
    #[error("label {value} at row {row} is not in {{0, 1}}")]
    LabelDomain { row: usize, value: String },
    #[error("dataset has no rows or no columns")]
    EmptyDataset,
    #[error("ragged matrix: row {row} has {found} values, expected {expected}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("operation requires labels but the dataset has none")]
    MissingLabels,
    #[error("class {class} has no members")]
    DegenerateClass { class: u8 },
    #[error("labels contain a single class")]
    SingleClass,
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("context has no contextual attributes")]
    EmptyContext,
    #[error("d = {d} is too large for exhaustive context enumeration (reduce to < 15 first)")]
    DimensionTooLarge { d: usize },
    #[error("d = {d} is too small, at least 2 features are needed")]
    DimensionTooSmall { d: usize },
    #[error("data has rank {rank}, fewer than the {requested} requested components")]
    RankDeficient { requested: usize, rank: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("labeled pool is empty")]
    EmptyPool,
    #[error("no unqueried samples left")]
    PoolExhausted,
    #[error("budget {budget} exceeds the {pool} available samples")]
    BudgetExceedsPool { budget: usize, pool: usize },
    #[error("sample {index} is already labeled")]
    AlreadyLabeled { index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),
    #[error("infeasible injection fraction {0}")]
    InfeasibleFraction(f64),
    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
