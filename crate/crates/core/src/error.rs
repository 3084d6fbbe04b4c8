use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LisError {
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("invalid window [{lo}, {hi}]")]
    InvalidWindow { lo: i64, hi: i64 },

    #[error("enumeration cap exceeded: {size} configurations requested, cap is {cap}")]
    CapExceeded { size: u128, cap: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("past has length {got}, at least {needed} required")]
    PastLength { got: usize, needed: usize },

    #[error("symbol index {symbol} outside alphabet of size {size}")]
    UnknownSymbol { symbol: usize, size: usize },

    #[error("observable depends on site {site}, outside the admissible range [{lo}, {hi}]")]
    SupportOutOfRange { site: i64, lo: i64, hi: i64 },

    #[error("unsupported kernel for this operation: {0}")]
    Unsupported(String),

    #[error("criterion not met: {0}")]
    CriterionNotMet(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("markov chain is not irreducible")]
    Reducible,

    #[error("markov chain is periodic with period {0}")]
    Periodic(u64),

    #[error("power iteration did not converge: residual {residual:e} after {iterations} iterations")]
    NoConvergence { residual: f64, iterations: usize },
}

pub type Result<T> = std::result::Result<T, LisError>;
