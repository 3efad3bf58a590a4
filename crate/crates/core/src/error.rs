use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("diffusion number r = {r} outside (0, 0.5]")]
    UnstableRatio { r: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid delay pattern: {0}")]
    InvalidPattern(String),

    #[error("invalid switching distribution: {0}")]
    InvalidDistribution(String),

    #[error("mode count {count} exceeds enumeration cap {cap}")]
    TooManyModes { count: String, cap: u128 },

    #[error("deflated matrix has spectral radius {radius} (expected < 1)")]
    NotContractive { radius: f64 },

    #[error("Lyapunov solve did not converge: {0}")]
    NonConvergent(String),

    #[error("matrix too large for {what}: dimension {dim} > {limit}")]
    DimensionGuard {
        what: &'static str,
        dim: usize,
        limit: usize,
    },

    #[error("horizon {horizon} exhausted before a power dropped below unit norm (smallest norm seen {smallest})")]
    HorizonExhausted { horizon: usize, smallest: f64 },

    #[error("operation cancelled")]
    Cancelled,

    #[error("eigenvalue computation failed to converge")]
    EigenFailure,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
