use thiserror::Error;

/// Errors raised by the library. Mathematical refutations (a witness that a
/// property fails) are returned as values, not as errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForgeError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("generator index {index} out of range for rank {rank}")]
    LetterOutOfRange { index: i32, rank: usize },
    #[error("rank mismatch: expected {expected}, found {found}")]
    RankMismatch { expected: usize, found: usize },
    #[error("singular matrix")]
    Singular,
    #[error("matrix is not loxodromic")]
    NotLoxodromic,
    #[error("determinant must be {expected}, found {found}")]
    Determinant { expected: String, found: String },
    #[error("enumeration of {requested} products exceeds the cap of {cap}")]
    TooLarge { requested: u128, cap: u128 },
    #[error("search exhausted: {0}")]
    SearchExhausted(String),
    #[error("hypothesis failed: {0}")]
    Hypothesis(String),
    #[error("comparison within tolerance of a tie: {0}")]
    Boundary(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, ForgeError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ForgeError::Invalid(msg.into()))
}
