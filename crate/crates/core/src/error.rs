use std::fmt;

/// Error type shared across the crate.
#[derive(Debug)]
pub enum SimError {
    /// Invalid parameter or field construction.
    InvalidInput(String),
    /// An operation rejected its arguments (mismatched grids, bad bracket, ...).
    Rejected(String),
    /// Iterative solve failed to reach the requested tolerance.
    Diverged {
        what: String,
        iterations: usize,
        residual: f64,
    },
    /// Non-finite value encountered where a finite one is required.
    NonFinite(String),
    /// Configuration file problem.
    Config(String),
    Io(std::io::Error),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::InvalidInput(m) => write!(f, "invalid input: {m}"),
            SimError::Rejected(m) => write!(f, "rejected: {m}"),
            SimError::Diverged {
                what,
                iterations,
                residual,
            } => write!(
                f,
                "{what} did not converge after {iterations} iterations (residual {residual:.3e})"
            ),
            SimError::NonFinite(m) => write!(f, "non-finite value: {m}"),
            SimError::Config(m) => write!(f, "config: {m}"),
            SimError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl std::error::Error for SimError {}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e)
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
