//! Predictors of (inverse) sensitivity consumed by the explorer.
//!
//! Two contracts live here:
//! * [`DirectionalApproximator`] predicts only the unit direction of the
//!   sensitivity vector. The learned [`MlpModel`] and the simulation-backed
//!   [`OracleDirection`] implement it.
//! * [`InverseSensitivity`] predicts the full displacement vector. The exact
//!   backward-integration oracle, the magnitude-restoring
//!   [`OracleEstimator`] and the [`SyntheticErrorOracle`] implement it.

mod mlp;
mod model_file;
mod oracle;
mod synthetic;

pub use mlp::{evaluate, train, MlpLayer, MlpModel, TrainConfig, TrainingReport};
pub use model_file::{load_model, model_from_json, model_to_json, save_model, MODEL_FORMAT_VERSION};
pub use oracle::{ExactInverse, OracleDirection, OracleEstimator, DEFAULT_PROBE_RADIUS};
pub use synthetic::SyntheticErrorOracle;

use serde::{Deserialize, Serialize};

pub use crate::dataset::SensitivityKind;
use crate::error::{Error, Result};
use crate::State;

/// Tolerance on the unit-norm precondition of direction inputs.
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproximatorSource {
    Trained,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproximatorInfo {
    pub system_name: String,
    pub kind: SensitivityKind,
    pub source: ApproximatorSource,
}

/// Predicts the unit direction of the sensitivity at `(x, v_hat, t)`.
pub trait DirectionalApproximator: Send + Sync {
    /// Unnormalized prediction.
    fn raw_direction(&self, x: &State, v_hat: &State, t: f64) -> Result<State>;

    fn info(&self) -> ApproximatorInfo;

    /// Normalized prediction; fails on a non-unit input or a vanishing output.
    fn predict(&self, x: &State, v_hat: &State, t: f64) -> Result<State> {
        if (v_hat.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::input(format!("direction input has norm {}", v_hat.norm())));
        }
        let raw = self.raw_direction(x, v_hat, t)?;
        let norm = raw.norm();
        if !(norm >= 1e-12) || !norm.is_finite() {
            return Err(Error::DegeneratePrediction { norm });
        }
        Ok(raw / norm)
    }
}

/// Predicts the full inverse-sensitivity displacement for `(x_t, v, t)`.
pub trait InverseSensitivity: Send + Sync {
    fn estimate(&self, x_t: &State, v: &State, t: f64) -> Result<State>;
}
