use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no NTT-friendly prime in the requested range")]
    NoPrimeFound,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("level {0} out of range (max {1})")]
    LevelOutOfRange(usize, usize),

    #[error("operation needs at least one spare level")]
    LevelTooLow,

    #[error("operands live at different levels")]
    LevelMismatch,

    #[error("operand in wrong domain (expected {expected})")]
    DomainMismatch { expected: &'static str },

    #[error("operands belong to different moduli")]
    ModulusMismatch,

    #[error("element is not invertible modulo the given prime")]
    NotInvertible,

    #[error("rescale step count {0} exceeds available level {1}")]
    MuOutOfRange(usize, usize),

    #[error("index out of range")]
    IndexOutOfRange,

    #[error("no evaluation key for tuple size {0}")]
    MissingEvalKey(usize),

    #[error("tuple product needs at least two operands")]
    EmptyOperands,

    #[error("message coefficients exceed the representable range")]
    MessageTooLarge,

    #[error("plan syntax error: {0}")]
    PlanParse(String),

    #[error("plan layer mismatch: {0}")]
    RefinementMismatch(String),

    #[error("plan covers {got} inputs, expected {expected}")]
    PlanArityMismatch { expected: usize, got: usize },

    #[error("plan needs depth {needed} but budget is {budget}")]
    DepthBudgetExceeded { needed: usize, budget: usize },

    #[error("no plan satisfies the given constraints")]
    SearchSpaceExhausted,

    #[error("file format error: {0}")]
    FileFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
