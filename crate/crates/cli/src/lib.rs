//! Command implementations and the reward service router, exposed as a
//! library so integration tests can drive them directly.
//!
//! Exit-code contract, stable for CI:
//! - 0: success
//! - 2: usage or configuration error
//! - 3: transport failure (an endpoint aborted at least one task)
//! - 4: degenerate input (zero-attention denominator, uncovered half)

pub mod commands;
pub mod config;
pub mod service;

/// Command failure carrying its exit class. Diagnostics go to stderr; stdout
/// stays reserved for machine-readable output.
#[derive(Debug)]
pub enum AppError {
    Usage(String),
    Transport(String),
    Degenerate(String),
    Internal(String),
}

impl AppError {
    pub fn exit_code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Transport(_) => 3,
            AppError::Degenerate(_) => 4,
            AppError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Usage(msg)
            | AppError::Transport(msg)
            | AppError::Degenerate(msg)
            | AppError::Internal(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for AppError {}
