use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("symbol index {index} out of range for constellation of order {order}")]
    SymbolIndex { index: usize, order: usize },

    #[error("expected {expected} samples, got {actual}")]
    Length { expected: usize, actual: usize },

    #[error("channel model violated: {0}")]
    Model(String),

    #[error("region {q} has no usable subcarrier pair")]
    EmptyPairSet { q: usize },

    #[error("weighted combining needs a positive noise variance, got {0}")]
    NoiseVariance(f64),

    #[error("need at least {needed} {what}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
