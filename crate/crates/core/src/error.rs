use thiserror::Error;

/// Errors produced anywhere in the exploration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied inconsistent or out-of-range input.
    #[error("invalid input: {0}")]
    Input(String),

    /// Integration produced a non-finite or runaway state.
    #[error("simulation diverged after sample {last_finite}")]
    Divergence {
        /// Index of the last sample whose coordinates were all finite and bounded.
        last_finite: usize,
    },

    /// Every candidate tuple was degenerate, nothing to train on.
    #[error("dataset generation failed: {0}")]
    Generation(String),

    /// Loss became non-finite during training.
    #[error("training diverged; last stable epoch {last_stable_epoch}")]
    TrainingDiverged { last_stable_epoch: usize },

    /// The approximator returned a (numerically) zero vector.
    #[error("degenerate prediction: output norm {norm:e}")]
    DegeneratePrediction { norm: f64 },

    /// The convergence bound gives no termination guarantee for these parameters.
    #[error("no termination guarantee: delta {delta} <= r_eps/s = {floor}")]
    NoTerminationGuarantee { delta: f64, floor: f64 },

    /// A file could not be decoded.
    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse { path: format!("line {} column {}", e.line(), e.column()), message: e.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
