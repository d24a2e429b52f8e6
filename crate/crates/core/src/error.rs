use thiserror::Error;

/// Largest exponent a special neuron may see before evaluation is aborted.
pub const EXP_GUARD: f64 = 40.0;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("hinge power must be at least 3, got {0}")]
    InvalidHingePower(u32),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("exp-overflow: exponent {exponent} exceeds the guard of {EXP_GUARD}{}", sample_suffix(*.sample))]
    ExpOverflow { exponent: f64, sample: Option<usize> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("size guard: {0}")]
    TooLarge(String),

    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("malformed dataset file (line {line}): {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn sample_suffix(sample: Option<usize>) -> String {
    match sample {
        Some(i) => format!(" at sample {i}"),
        None => String::new(),
    }
}

impl LabError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LabError::InvalidArgument(msg.into())
    }

    /// Attaches a sample index to an overflow diagnostic.
    pub(crate) fn at_sample(self, index: usize) -> Self {
        match self {
            LabError::ExpOverflow { exponent, .. } => LabError::ExpOverflow {
                exponent,
                sample: Some(index),
            },
            other => other,
        }
    }

    pub fn is_overflow(&self) -> bool {
        matches!(self, LabError::ExpOverflow { .. })
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
