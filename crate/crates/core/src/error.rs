//! Error type shared by every stage of the pipeline.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied an argument outside the accepted domain.
    #[error("invalid input: {0}")]
    Input(String),

    /// Sensor configuration is malformed or violates a geometric invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Contact simulation left the regime where the optical model is meaningful.
    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    /// Optimisation diverged or produced a non-finite loss.
    #[error("training error at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// A linear system could not be solved.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("dataset error: {0}")]
    Dataset(#[from] DatasetError),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Validation failures raised while reading or appending to a dataset directory.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing file for sample {sample_id}: {path}")]
    MissingFile { sample_id: String, path: PathBuf },

    #[error("corrupted image for sample {sample_id}: {reason}")]
    CorruptImage { sample_id: String, reason: String },

    #[error("unsupported manifest version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("config hash mismatch: manifest has {manifest}, expected {expected}")]
    HashMismatch { manifest: String, expected: String },

    #[error("malformed manifest line {line}: {reason}")]
    Malformed { line: usize, reason: String },

    #[error("dataset directory {0} is locked by another writer")]
    Locked(PathBuf),

    #[error("records must share one task type")]
    MixedTasks,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
