use super::{ApproximatorInfo, ApproximatorSource, DirectionalApproximator, InverseSensitivity, SensitivityKind};
use crate::dynamics::ClosedLoopSystem;
use crate::error::Result;
use crate::sensitivity::{inverse_sensitivity_oracle, sensitivity_exact};
use crate::State;

/// Finite displacement used to evaluate the directional limit.
pub const DEFAULT_PROBE_RADIUS: f64 = 1e-4;

/// Exact `Φ⁻¹` through two backward simulations.
#[derive(Debug, Clone, Copy)]
pub struct ExactInverse<'a> {
    pub system: &'a ClosedLoopSystem,
}

impl<'a> ExactInverse<'a> {
    pub fn new(system: &'a ClosedLoopSystem) -> Self {
        Self { system }
    }
}

impl InverseSensitivity for ExactInverse<'_> {
    fn estimate(&self, x_t: &State, v: &State, t: f64) -> Result<State> {
        inverse_sensitivity_oracle(self.system, x_t, v, t)
    }
}

/// Simulation-backed directional predictor, probing at a small radius.
#[derive(Debug, Clone)]
pub struct OracleDirection {
    pub system: ClosedLoopSystem,
    pub kind: SensitivityKind,
    pub probe_radius: f64,
}

impl OracleDirection {
    pub fn new(system: ClosedLoopSystem, kind: SensitivityKind) -> Self {
        Self { system, kind, probe_radius: DEFAULT_PROBE_RADIUS }
    }
}

impl DirectionalApproximator for OracleDirection {
    fn raw_direction(&self, x: &State, v_hat: &State, t: f64) -> Result<State> {
        let v = v_hat * self.probe_radius;
        match self.kind {
            SensitivityKind::Inverse => inverse_sensitivity_oracle(&self.system, x, &v, t),
            SensitivityKind::Forward => sensitivity_exact(&self.system, x, &v, t),
        }
    }

    fn info(&self) -> ApproximatorInfo {
        ApproximatorInfo { system_name: self.system.name.clone(), kind: self.kind, source: ApproximatorSource::Oracle }
    }
}

/// Restores magnitude to a directional predictor using the exact norm:
/// `N(x, v, t) = Ñ(x, v/‖v‖, t) · ‖Φ⁻¹(x, v, t)‖`.
///
/// Only usable where the oracle is available; it measures how much of the
/// error is due to the direction alone.
pub struct OracleEstimator<'a, A: DirectionalApproximator + ?Sized> {
    pub approx: &'a A,
    pub system: &'a ClosedLoopSystem,
}

impl<A: DirectionalApproximator + ?Sized> InverseSensitivity for OracleEstimator<'_, A> {
    fn estimate(&self, x_t: &State, v: &State, t: f64) -> Result<State> {
        let exact = inverse_sensitivity_oracle(self.system, x_t, v, t)?;
        let norm = v.norm();
        if norm == 0.0 {
            return Ok(exact);
        }
        Ok(self.approx.predict(x_t, &(v / norm), t)? * exact.norm())
    }
}
