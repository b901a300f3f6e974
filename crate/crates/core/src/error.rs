//! Error type shared by every stage of the receiver model.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate input at index {index}: {reason}")]
    Degenerate { index: usize, reason: String },

    #[error("pilot not found: spectral peak {peak_db:.1} dB above median (need 6 dB)")]
    PilotNotFound { peak_db: f64 },

    #[error("frame sync failed: correlation peak is {ratio:.2}x the off-peak RMS (need 5x)")]
    SyncFailure { ratio: f64 },

    #[error("CMA diverged at step {step}")]
    Divergence { step: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("channel estimate degenerate: {0}")]
    EstimateDegenerate(String),

    #[error("unphysical covariance matrix: symplectic eigenvalue {nu}")]
    Unphysical { nu: f64 },

    #[error("Fock cutoff {cutoff} too small: trace deficit {deficit:e}")]
    Cutoff { cutoff: usize, deficit: f64 },

    #[error("ADC clipping on {fraction:.4}% of samples exceeds 0.1%")]
    Clipping { fraction: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
