use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("table has no rows")]
    EmptyTable,

    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedTable {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("categorical feature `{feature}` has {count} distinct values (maximum is 256)")]
    CardinalityOverflow { feature: String, count: usize },

    #[error("feature `{feature}` has fewer than 2 distinct values")]
    ConstantColumn { feature: String },

    #[error("unknown category `{label}` for feature `{feature}`")]
    UnknownCategory { feature: String, label: String },

    #[error("missing value for feature `{feature}` in row {row}")]
    MissingValue { feature: String, row: usize },

    #[error("cannot parse `{value}` as a number for feature `{feature}` in row {row}")]
    InvalidNumber {
        feature: String,
        row: usize,
        value: String,
    },

    #[error("column `{0}` not found")]
    UnknownColumn(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("leaf has zero model probability mass")]
    ZeroModelMass,

    #[error("expected rejection-sampling acceptance {expected:.3e} is below 1e-6")]
    AcceptanceStall { expected: f64 },

    #[error("marginalizing over {size} joint values exceeds the budget of {budget}")]
    MarginalizationBudgetExceeded { size: u128, budget: u64 },

    #[error("domain of {size} points is too large to enumerate (limit {limit})")]
    DomainTooLarge { size: u128, limit: u64 },

    #[error("targets have zero variance")]
    DegenerateTargets,

    #[error("labels contain a single class")]
    SingleClass,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
