//! Exact forward/inverse sensitivity from simulations and error measurement.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approximator::DirectionalApproximator;
use crate::dataset::random_unit;
use crate::dynamics::{fmt_f64, time_to_index, ClosedLoopSystem, Trajectory};
use crate::error::{Error, Result};
use crate::region::Hyperbox;
use crate::State;

fn grid_index(system: &ClosedLoopSystem, t: f64) -> Result<usize> {
    let k = time_to_index(t, system.step)?;
    if k > system.max_steps {
        return Err(Error::input(format!("time {t} exceeds the horizon {}", system.horizon())));
    }
    Ok(k)
}

fn check_dims(system: &ClosedLoopSystem, x: &State, v: &State) -> Result<()> {
    if x.len() != system.dim() || v.len() != system.dim() {
        return Err(Error::input("state and perturbation must match the system dimension"));
    }
    if v.iter().any(|c| !c.is_finite()) {
        return Err(Error::input("perturbation must be finite"));
    }
    Ok(())
}

/// `Φ(x0, v, t) = ξ(x0 + v, t) - ξ(x0, t)`.
pub fn sensitivity_exact(system: &ClosedLoopSystem, x0: &State, v: &State, t: f64) -> Result<State> {
    check_dims(system, x0, v)?;
    let k = grid_index(system, t)?;
    let a = system.simulate(x0, k)?;
    let b = system.simulate(&(x0 + v), k)?;
    Ok(b.final_state() - a.final_state())
}

/// `Φ⁻¹(x_t, v, t) = ξ⁻¹(x_t + v, t) - ξ⁻¹(x_t, t)` by backward integration.
pub fn inverse_sensitivity_oracle(system: &ClosedLoopSystem, x_t: &State, v: &State, t: f64) -> Result<State> {
    check_dims(system, x_t, v)?;
    let k = grid_index(system, t)?;
    let a = system.simulate_backward(x_t, k)?;
    let b = system.simulate_backward(&(x_t + v), k)?;
    Ok(b.final_state() - a.final_state())
}

/// Result of reading a trajectory pair at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSensitivity {
    pub x_t: State,
    /// Displacement at time `t`.
    pub v: State,
    /// Displacement at time 0, i.e. `Φ⁻¹(x_t, v, t)`.
    pub v_minus: State,
}

/// Inverse sensitivity read off two forward trajectories, no backward integration.
pub fn inverse_sensitivity_from_pair(a: &Trajectory, b: &Trajectory, t: f64) -> Result<PairSensitivity> {
    if (a.step() - b.step()).abs() > 1e-15 * a.step().abs().max(1.0) {
        return Err(Error::input(format!("step sizes differ: {} vs {}", a.step(), b.step())));
    }
    if a.dim() != b.dim() {
        return Err(Error::input("trajectories have different dimensions"));
    }
    let k = time_to_index(t, a.step())?;
    if k > a.steps() || k > b.steps() {
        return Err(Error::input(format!("time {t} is beyond one of the trajectories")));
    }
    let x_t = a.samples()[k].clone();
    Ok(PairSensitivity { v: &b.samples()[k] - &x_t, x_t, v_minus: b.initial_state() - a.initial_state() })
}

/// Mean absolute error of the magnitude-restored estimator per radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub radii: Vec<f64>,
    pub eps_abs: Vec<f64>,
    pub samples_per_radius: usize,
}

impl ErrorCurve {
    /// CSV `radius,eps_abs,samples`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["radius", "eps_abs", "samples"])?;
        for (r, e) in self.radii.iter().zip(&self.eps_abs) {
            w.write_record([fmt_f64(*r), fmt_f64(*e), self.samples_per_radius.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const DEFAULT_RADII: [f64; 6] = [0.001, 0.0025, 0.005, 0.01, 0.025, 0.05];
pub const DEFAULT_SAMPLES_PER_RADIUS: usize = 200;

/// Estimates `ε_abs(r)` assuming `ε_rel ≈ 0`.
///
/// For each radius, fresh trajectories from `theta` supply `(x_t, v_hat, t)`;
/// the error is `‖Ñ(x_t, v_hat, t)·‖Φ⁻¹(x_t, r v_hat, t)‖ - Φ⁻¹(x_t, r v_hat, t)‖`.
/// Each radius uses its own random stream derived from `seed`.
pub fn abs_error_curve<A: DirectionalApproximator + ?Sized>(
    approx: &A,
    system: &ClosedLoopSystem,
    theta: &Hyperbox,
    radii: &[f64],
    samples_per_radius: usize,
    seed: u64,
) -> Result<ErrorCurve> {
    if samples_per_radius == 0 {
        return Err(Error::input("samples_per_radius must be positive"));
    }
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::input("radii must be positive and strictly increasing"));
    }
    let n = system.dim();
    let mut eps_abs = Vec::with_capacity(radii.len());
    for (ri, &r) in radii.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ri as u64 + 1);
        let mut total = 0.0;
        for _ in 0..samples_per_radius {
            let x0 = theta.sample(&mut rng)?;
            let k = rng.random_range(1..=system.max_steps);
            let traj = system.simulate(&x0, k)?;
            let x_t = traj.final_state();
            let v_hat = random_unit(n, &mut rng);
            let t = k as f64 * system.step;
            let exact = inverse_sensitivity_oracle(system, x_t, &(&v_hat * r), t)?;
            let estimate = approx.predict(x_t, &v_hat, t)? * exact.norm();
            total += (estimate - exact).norm();
        }
        eps_abs.push(total / samples_per_radius as f64);
    }
    Ok(ErrorCurve { radii: radii.to_vec(), eps_abs, samples_per_radius })
}
