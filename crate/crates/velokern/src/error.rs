//! Crate-wide error type.
//!
//! Errors are grouped into four classes that the CLI maps onto distinct exit
//! codes: configuration problems, malformed data, numerical failures, and
//! property-check failures.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented precondition
    /// (dimension mismatch, empty window, invalid lag structure, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Not enough samples to build the requested object.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Configuration file is missing keys or holds out-of-range values.
    #[error("config error: {0}")]
    Config(String),

    /// A data file could not be parsed.
    #[error("data error in {path} (line {line}): {message}")]
    Data {
        path: String,
        line: usize,
        message: String,
    },

    /// A simulation produced a non-finite sample.
    #[error("simulation diverged at step {index}: non-finite output")]
    SimulationDiverged { index: usize },

    /// Symmetric positive definite factorization failed, even after the
    /// single jitter retry. `pivot` is the zero-based index of the first
    /// non-positive pivot encountered.
    #[error("SPD factorization failed at pivot {pivot} (jitter retry exhausted)")]
    Factorization { pivot: usize },

    /// A dense expansion would exceed the configured element cap.
    #[error("dense expansion of {rows}x{cols} exceeds the {cap}-element cap")]
    SizeOverflow { rows: usize, cols: usize, cap: usize },

    /// The requested lag structure has no explicit parameter construction.
    #[error("unsupported lag structure (n_a, n_b) = ({n_a}, {n_b}): {reason}")]
    UnsupportedLags {
        n_a: usize,
        n_b: usize,
        reason: String,
    },

    /// A numerical guard tripped (non-finite intermediate, failed identity).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Exit code used by the CLI when a verification property fails.
pub const EXIT_PROPERTY_FAILURE: i32 = 5;

impl Error {
    /// Process exit code class: 2 = invalid configuration, 3 = malformed or
    /// insufficient data, 4 = numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::Config(_)
            | Error::SizeOverflow { .. }
            | Error::UnsupportedLags { .. } => 2,
            Error::InsufficientData(_) | Error::Data { .. } | Error::Io(_) => 3,
            Error::SimulationDiverged { .. }
            | Error::Factorization { .. }
            | Error::Numerical(_) => 4,
        }
    }
}
