use thiserror::Error;

/// Errors produced by the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing observation for subject {subject}, component {component}, grid point {point}")]
    MissingObservation {
        subject: usize,
        component: usize,
        point: usize,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate spectrum: all eigenvalues are zero")]
    DegenerateSpectrum,

    #[error("degenerate variance for basis {basis}, component {component}")]
    DegenerateVariance { basis: usize, component: usize },

    #[error("true edge set is empty; true positive rate undefined")]
    DegenerateTruth,

    #[error("value out of range: {0}")]
    Range(String),
}

pub type Result<T> = std::result::Result<T, Error>;
