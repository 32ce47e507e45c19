use thiserror::Error;

/// Errors raised by the integrator and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdmError {
    #[error("coordinate x_{index} = {value} lies outside the domain {domain}")]
    Domain {
        index: usize,
        value: f64,
        domain: &'static str,
    },

    #[error("integrand returned a non-finite value ({value}) at {context}")]
    NonFinite { value: f64, context: String },

    #[error("subset cardinality {len} exceeds the configured cap {cap}")]
    CardinalityCap { len: usize, cap: usize },

    #[error("invalid subset: {0}")]
    InvalidSubset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("series diverges: alpha = {alpha} must be below the decay exponent {decay}")]
    Divergence { alpha: f64, decay: f64 },

    #[error("resource budget exceeded: {0}")]
    Resource(String),

    #[error("{0} is not a prime >= 3")]
    NotPrime(u64),

    #[error("backend {backend} cannot integrate over the domain {domain}")]
    Incompatible { backend: String, domain: String },

    #[error("refused: {0}")]
    Refused(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numeric overflow: {0}")]
    Overflow(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, MdmError>;
