use std::fmt;

/// Harness failures split by exit code: configuration problems exit 2,
/// runtime failures exit 3.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn config(msg: impl fmt::Display) -> Self {
        HarnessError::Config(msg.to_string())
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        HarnessError::Runtime(msg.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Runtime(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
