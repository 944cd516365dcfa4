use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible (measure convolution/addition,
    /// system matrices, gain vectors).
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A constructor received data violating a structural invariant
    /// (non-increasing delays, out-of-range locations, bad step sizes).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A sweep or solver configuration is unusable (grid too coarse,
    /// rate out of range, unwritable output).
    #[error("configuration error: {0}")]
    Config(String),

    /// The assembled least-squares problem exceeds the memory cap.
    #[error("problem too large: {0}")]
    Sizing(String),

    /// The iterative solver did not reach the requested tolerance.
    #[error("solver did not converge: {0}")]
    SolverDiverged(String),

    /// A prerequisite check failed (refused synthesis or rate selection).
    #[error("precondition failed: {0}")]
    CheckFailed(String),

    /// Text record (config file, gains CSV) could not be parsed.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
