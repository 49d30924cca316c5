use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid value: {0}")]
    Value(String),
    #[error("row {row} has zero norm")]
    ZeroNorm { row: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("integrity violation: {0}")]
    Integrity(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unknown id: {0}")]
    Lookup(String),
    #[error("non-finite value produced by {layer}")]
    Numeric { layer: String },
    #[error("training diverged at step {step}: {reason}")]
    Training { step: usize, reason: String },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("degenerate variance: both samples are constant with different means")]
    DegenerateVariance,
}
