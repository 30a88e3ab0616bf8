use thiserror::Error;

pub type Result<T> = std::result::Result<T, ShapError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapError {
    /// A size guard was exceeded (enumeration, exact solvers, coalition width).
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Model documents that fail to parse or validate. `path` locates the offending field.
    #[error("invalid model at {path}: {message}")]
    Validation { path: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("consistency precondition violated: {0}")]
    InvalidPair(String),

    #[error("singular weighted design: {0}")]
    Singular(String),

    #[error("M = {n_features} exceeds the low-order threshold {threshold}; run kernel with an explicit budget")]
    BudgetRequired { n_features: usize, threshold: usize },

    #[error("method {method} is not applicable: {reason}")]
    Inapplicable { method: String, reason: String },

    #[error("unknown method: {0}")]
    UnknownMethod(String),

    #[error("io error: {0}")]
    Io(String),
}

impl ShapError {
    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        ShapError::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Stable short code used by the command line for machine-readable errors.
    pub fn code(&self) -> &'static str {
        match self {
            ShapError::Capacity(_) => "capacity",
            ShapError::Shape { .. } => "shape",
            ShapError::Numeric(_) => "numeric",
            ShapError::Config(_) => "config",
            ShapError::Validation { .. } => "validation",
            ShapError::Domain(_) => "domain",
            ShapError::InvalidPair(_) => "invalid_pair",
            ShapError::Singular(_) => "singular",
            ShapError::BudgetRequired { .. } => "budget_required",
            ShapError::Inapplicable { .. } => "inapplicable",
            ShapError::UnknownMethod(_) => "unknown_method",
            ShapError::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for ShapError {
    fn from(e: std::io::Error) -> Self {
        ShapError::Io(e.to_string())
    }
}

impl From<csv::Error> for ShapError {
    fn from(e: csv::Error) -> Self {
        ShapError::Io(e.to_string())
    }
}
