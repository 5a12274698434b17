//! Error type shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LgpError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite (leading minor {minor} of {size})")]
    NotPositiveDefinite { minor: usize, size: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown patient {patient_id} in arm {arm}")]
    UnknownPatient { arm: u8, patient_id: String },

    #[error("iteration {iteration}: {source}")]
    Chain {
        iteration: usize,
        #[source]
        source: Box<LgpError>,
    },

    #[error("trial replicate {replicate}: {source}")]
    Trial {
        replicate: usize,
        #[source]
        source: Box<LgpError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LgpError {
    /// True for failures caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            LgpError::NotPositiveDefinite { .. } | LgpError::Numerical(_) => true,
            LgpError::Chain { source, .. } | LgpError::Trial { source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }
}

pub type Result<T, E = LgpError> = std::result::Result<T, E>;
