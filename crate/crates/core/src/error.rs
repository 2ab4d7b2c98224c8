use thiserror::Error;

/// Errors shared across the library.
///
/// Contract violations (bad dimensions, out-of-range parameters, non-finite
/// inputs) are reported through this type rather than panics so the harness
/// can map them to exit codes.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error(
        "value iteration did not converge: residual {residual:.3e} after {iterations} iterations"
    )]
    NonConvergence { residual: f64, iterations: usize },

    #[error("unknown environment `{0}` (known: gridworld, cliff, chain, cartpole, reach1d)")]
    UnknownEnvironment(String),

    #[error("unknown {what} `{name}`")]
    UnknownIdentifier { what: &'static str, name: String },

    #[error("environment parameter `{key}`: {reason}")]
    EnvParameter { key: String, reason: String },

    #[error("checkpoint is missing {0}")]
    CheckpointContents(&'static str),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    /// Shorthand for `InvalidParameter` so call sites stay one line.
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        CoreError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

/// Requires every entry of `values` to be finite.
pub fn ensure_finite(context: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CoreError::NonFinite { context })
    }
}

/// Requires a single scalar to be finite.
pub fn ensure_finite_scalar(context: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(CoreError::NonFinite { context })
    }
}
