use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] psfggm::Error),
}

impl CliError {
    /// Process exit code: 2 for configuration problems, 3 for I/O and
    /// malformed input files, 4 for numerical degeneracy.
    pub fn exit_code(&self) -> i32 {
        use psfggm::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Read { .. } | CliError::Write { .. } => 3,
            CliError::Core(e) => match e {
                E::Io(_) | E::Parse { .. } | E::MissingObservation { .. } | E::GridMismatch(_) => 3,
                E::InvalidInput(_) | E::IndexOutOfRange { .. } | E::DimensionMismatch { .. } | E::Range(_) => 2,
                E::Numerical(_) | E::DegenerateSpectrum | E::DegenerateVariance { .. } | E::DegenerateTruth => 4,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
