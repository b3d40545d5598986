use serde::{Deserialize, Serialize};

use crate::approximator::{DirectionalApproximator, SensitivityKind};
use crate::dataset::SampleTuple;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::State;

/// Initial perturbations above this size trigger a warning.
pub const PREDICT_RADIUS_WARN: f64 = 0.05;

/// Growth of the displacement magnitude relative to `‖v0‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum MagnitudeModel {
    /// The displacement keeps its initial size.
    Unit,
    /// `intercept + slope * t`.
    Linear { intercept: f64, slope: f64 },
}

impl MagnitudeModel {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            MagnitudeModel::Unit => 1.0,
            MagnitudeModel::Linear { intercept, slope } => intercept + slope * t,
        }
    }

    /// Least-squares line through `(t, ‖v_t‖/‖v_0‖)` of forward tuples.
    pub fn fit(tuples: &[SampleTuple]) -> Result<Self> {
        let pts: Vec<(f64, f64)> = tuples
            .iter()
            .filter(|s| s.kind == SensitivityKind::Forward)
            .map(|s| (s.t, s.mag_vminus / s.mag_v))
            .collect();
        if pts.len() < 2 {
            return Err(Error::input("magnitude fit needs at least two forward tuples"));
        }
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        if sxx == 0.0 {
            return Ok(MagnitudeModel::Linear { intercept: my, slope: 0.0 });
        }
        let slope = sxy / sxx;
        Ok(MagnitudeModel::Linear { intercept: my - slope * mt, slope })
    }
}

/// Approximates the trajectory from `x0_new` using only `anchor` and a
/// forward directional approximator; no simulation is run.
pub fn predict_trajectory<A: DirectionalApproximator + ?Sized>(
    approx: &A,
    anchor: &Trajectory,
    x0_new: &State,
    magnitude: &MagnitudeModel,
) -> Result<Trajectory> {
    if approx.info().kind != SensitivityKind::Forward {
        return Err(Error::input("trajectory prediction needs a forward-sensitivity approximator"));
    }
    if x0_new.len() != anchor.dim() {
        return Err(Error::input("initial state dimension differs from the anchor"));
    }
    let origin = anchor.initial_state();
    let v0 = x0_new - origin;
    let r = v0.norm();
    if r == 0.0 {
        return Ok(anchor.clone());
    }
    if r > PREDICT_RADIUS_WARN {
        log::warn!("perturbation {r} is large; the prediction may be poor");
    }
    let v_hat = &v0 / r;
    let mut samples = Vec::with_capacity(anchor.samples().len());
    samples.push(x0_new.clone());
    for (k, a) in anchor.samples().iter().enumerate().skip(1) {
        let t = k as f64 * anchor.step();
        let d = approx.predict(origin, &v_hat, t)?;
        samples.push(a + d * (r * magnitude.at(t)));
    }
    Trajectory::new(anchor.step(), samples)
}
