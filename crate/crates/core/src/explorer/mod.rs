//! Reach-destination search and the analyses built on it.
//!
//! [`reach_destination`] perturbs the initial state of an anchor trajectory
//! using predicted inverse sensitivity until its state at time `t` lands within
//! `delta` of a destination. Everything else in this module (extremal search,
//! coverage, falsification) is a driver around that loop.

mod bounds;
mod coverage;
mod extreme;
mod predict;

pub use bounds::{convergence_bound, k_star, ConvergenceParams};
pub use coverage::{coverage, coverage_of_targets, CoverageReport, TemplateSet};
pub use extreme::{reach_extreme, ExtremeResult};
pub use predict::{predict_trajectory, MagnitudeModel, PREDICT_RADIUS_WARN};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::approximator::{DirectionalApproximator, InverseSensitivity};
use crate::dynamics::{fmt_f64, time_to_index, ClosedLoopSystem, Trajectory};
use crate::error::{Error, Result};
use crate::region::Hyperbox;
use crate::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionPolicy {
    /// Progress along `z - x_t`.
    StraightLine,
    /// Progress along the signed coordinate axis closest to `z - x_t`.
    AxisAligned,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RDParams {
    pub s: f64,
    pub p: usize,
    pub delta: f64,
    pub bound: usize,
    pub policy: DirectionPolicy,
}

impl RDParams {
    pub fn new(s: f64, p: usize, delta: f64, bound: usize) -> Self {
        Self { s, p, delta, bound, policy: DirectionPolicy::StraightLine }
    }

    pub fn with_policy(mut self, policy: DirectionPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(Error::input(format!("s must lie in (0, 1], got {}", self.s)));
        }
        if self.p == 0 || self.bound == 0 {
            return Err(Error::input("p and the correction bound must be positive"));
        }
        if !(self.delta > 0.0) {
            return Err(Error::input(format!("delta must be positive, got {}", self.delta)));
        }
        if self.s * self.p as f64 > 1.0 + 1e-12 {
            log::warn!("s*p = {} exceeds 1; convergence is not guaranteed", self.s * self.p as f64);
        }
        Ok(())
    }
}

impl Default for RDParams {
    /// s = 0.5, p = 2, delta = 0.004, 50 corrections.
    fn default() -> Self {
        Self::new(0.5, 2, 0.004, 50)
    }
}

/// Source of inverse-sensitivity estimates for the search.
#[derive(Clone, Copy)]
pub enum Guide<'a> {
    /// Full displacement estimates, used as-is.
    Vector(&'a dyn InverseSensitivity),
    /// Unit-direction estimates, rescaled by `s‖v‖`.
    Directional(&'a dyn DirectionalApproximator),
}

impl Guide<'_> {
    /// Initial-state displacement for progress `v` at `(x_t, t)`.
    fn step(&self, x_t: &State, v: &State, t: f64, s: f64) -> Result<State> {
        match self {
            Guide::Vector(n) => n.estimate(x_t, v, t),
            Guide::Directional(n) => {
                let norm = v.norm();
                if norm == 0.0 {
                    return Ok(State::zeros(v.len()));
                }
                Ok(n.predict(x_t, &(v / norm), t)? * (s * norm))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    #[serde(with = "crate::serde_state")]
    pub x0: State,
    #[serde(with = "crate::serde_state")]
    pub x_t: State,
    pub d_a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RDResult {
    /// Simulations generated after the input anchor.
    pub k: usize,
    pub final_trajectory: Trajectory,
    pub d_a: f64,
    pub d_r: f64,
    pub d_init: f64,
    pub log: Vec<IterationRecord>,
    /// Set when the approximator failed and the search stopped early.
    pub aborted: Option<String>,
}

#[derive(Serialize)]
struct RDExport<'a> {
    k: usize,
    d_init: f64,
    d_a: f64,
    d_r: f64,
    reached: bool,
    aborted: &'a Option<String>,
    iterations: &'a [IterationRecord],
}

impl RDResult {
    pub fn reached(&self, delta: f64) -> bool {
        self.d_a <= delta
    }

    /// Entry of the log closest to the destination.
    pub fn best(&self) -> &IterationRecord {
        self.log.iter().min_by(|a, b| a.d_a.total_cmp(&b.d_a)).expect("log holds the initial entry")
    }

    /// `{k, d_init, d_a, d_r, reached, aborted, iterations}`.
    pub fn to_json(&self, delta: f64) -> String {
        serde_json::to_string_pretty(&RDExport {
            k: self.k,
            d_init: self.d_init,
            d_a: self.d_a,
            d_r: self.d_r,
            reached: self.reached(delta),
            aborted: &self.aborted,
            iterations: &self.log,
        })
        .expect("result serializes")
    }

    /// CSV `iteration,d_a,x0_1..x0_n,xt_1..xt_n`.
    pub fn write_iterations_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.final_trajectory.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string(), "d_a".to_string()];
        header.extend((1..=n).map(|i| format!("x0_{i}")));
        header.extend((1..=n).map(|i| format!("xt_{i}")));
        w.write_record(&header)?;
        for (i, r) in self.log.iter().enumerate() {
            let mut row = vec![i.to_string(), fmt_f64(r.d_a)];
            row.extend(r.x0.iter().map(|v| fmt_f64(*v)));
            row.extend(r.x_t.iter().map(|v| fmt_f64(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Euclidean projection onto a box.
pub fn project_to_box(x: &State, theta: &Hyperbox) -> State {
    theta.project(x)
}

/// The signed unit axis `±e_i` with the largest dot product with `w`.
///
/// Ties go to the lowest index, then to the positive sign.
pub fn axis_aligned_direction(w: &State) -> Result<State> {
    if w.is_empty() || w.norm() == 0.0 || !w.norm().is_finite() {
        return Err(Error::input("axis-aligned direction of a zero or non-finite vector"));
    }
    let mut best = 0;
    for i in 1..w.len() {
        if w[i].abs() > w[best].abs() {
            best = i;
        }
    }
    let mut e = State::zeros(w.len());
    e[best] = if w[best] >= 0.0 { 1.0 } else { -1.0 };
    Ok(e)
}

/// Validates an anchor against `system` and `theta`; returns the grid index of `t`.
pub(crate) fn check_anchor(system: &ClosedLoopSystem, anchor: &Trajectory, t: f64, theta: &Hyperbox) -> Result<usize> {
    if anchor.dim() != system.dim() || theta.dim() != system.dim() {
        return Err(Error::input("anchor, initial set and system dimensions differ"));
    }
    if (anchor.step() - system.step).abs() > 1e-12 * system.step {
        return Err(Error::input(format!("anchor step {} differs from system step {}", anchor.step(), system.step)));
    }
    let index = time_to_index(t, system.step)?;
    if index > anchor.steps() {
        return Err(Error::input(format!("time {t} is beyond the anchor ({} steps)", anchor.steps())));
    }
    if !theta.contains(anchor.initial_state()) {
        return Err(Error::input("anchor initial state lies outside the initial set"));
    }
    Ok(index)
}

fn progress_vector(w: &State, s: f64, policy: DirectionPolicy) -> Result<State> {
    match policy {
        DirectionPolicy::StraightLine => Ok(w * s),
        DirectionPolicy::AxisAligned => {
            let e = axis_aligned_direction(w)?;
            let along = w.dot(&e);
            Ok(e * (s * along))
        }
    }
}

/// Searches for an initial state in `theta` whose trajectory passes within
/// `params.delta` of `z` at time `t` (snapped to the grid).
///
/// Between simulations `x_t` advances virtually by the requested progress;
/// each simulation replaces it with the true state. An approximator failure
/// ends the search with `aborted` set and the log so far.
pub fn reach_destination(
    system: &ClosedLoopSystem,
    guide: Guide<'_>,
    anchor: &Trajectory,
    z: &State,
    t: f64,
    theta: &Hyperbox,
    params: &RDParams,
) -> Result<RDResult> {
    params.validate()?;
    let index = check_anchor(system, anchor, t, theta)?;
    if z.len() != system.dim() || z.iter().any(|c| !c.is_finite()) {
        return Err(Error::input("destination must be finite and match the system dimension"));
    }
    let t = index as f64 * system.step;
    let horizon = anchor.steps();

    let mut trajectory = anchor.clone();
    let mut x0 = anchor.initial_state().clone();
    let mut x_t = anchor.samples()[index].clone();
    let mut w = z - &x_t;
    let d_init = w.norm();
    let mut d_a = d_init;
    let mut log = vec![IterationRecord { x0: x0.clone(), x_t: x_t.clone(), d_a }];
    let mut k = 0;
    let mut aborted = None;

    'outer: while d_a > params.delta && k < params.bound {
        let v = progress_vector(&w, params.s, params.policy)?;
        for _ in 0..params.p {
            let v_minus = match guide.step(&x_t, &v, t, params.s) {
                Ok(v_minus) => v_minus,
                Err(e @ (Error::DegeneratePrediction { .. } | Error::Input(_))) => {
                    aborted = Some(e.to_string());
                    break 'outer;
                }
                Err(e) => return Err(e),
            };
            x0 = theta.project(&(&x0 + v_minus));
            x_t += &v;
        }
        trajectory = system.simulate(&x0, horizon)?;
        k += 1;
        x_t = trajectory.samples()[index].clone();
        w = z - &x_t;
        d_a = w.norm();
        log.push(IterationRecord { x0: x0.clone(), x_t: x_t.clone(), d_a });
    }

    let d_r = if d_init > 0.0 { d_a / d_init } else { 0.0 };
    Ok(RDResult { k, final_trajectory: trajectory, d_a, d_r, d_init, log, aborted })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::approximator::{ExactInverse, OracleDirection, SensitivityKind};
    use crate::dynamics::catalog;

    fn s(v: &[f64]) -> State {
        State::from_column_slice(v)
    }

    #[test]
    fn constant_field_contracts_by_half() {
        let sys = catalog::constant();
        let theta = sys.initial_set.clone().unwrap();
        let anchor = sys.simulate_full(&s(&[0.0, 0.0])).unwrap();
        let z = &anchor.samples()[50] + s(&[0.0, 1.0]);
        let exact = ExactInverse::new(&sys);
        let params = RDParams::new(0.5, 1, 0.004, 50);
        let r = reach_destination(&sys, Guide::Vector(&exact), &anchor, &z, 0.5, &theta, &params).unwrap();
        assert_eq!(r.k, 8);
        assert_eq!(r.log.len(), 9);
        for (k, rec) in r.log.iter().enumerate() {
            assert!((rec.d_a - 0.5f64.powi(k as i32)).abs() < 1e-9);
        }
        assert!((r.d_r - r.d_a / r.d_init).abs() < 1e-15);
    }

    #[test]
    fn already_at_destination() {
        let sys = catalog::vanderpol();
        let theta = sys.initial_set.clone().unwrap();
        let anchor = sys.simulate_full(&theta.center()).unwrap();
        let z = anchor.samples()[120].clone();
        let exact = ExactInverse::new(&sys);
        let r = reach_destination(&sys, Guide::Vector(&exact), &anchor, &z, 1.2, &theta, &RDParams::default()).unwrap();
        assert_eq!((r.k, r.d_a, r.log.len()), (0, 0.0, 1));
    }

    #[test]
    fn rejects_bad_inputs() {
        let sys = catalog::constant();
        let theta = sys.initial_set.clone().unwrap();
        let anchor = sys.simulate(&s(&[0.0, 0.0]), 10).unwrap();
        let exact = ExactInverse::new(&sys);
        let g = Guide::Vector(&exact);
        let p = RDParams::default();
        assert!(reach_destination(&sys, g, &anchor, &s(&[0.0, 0.0]), 0.5, &theta, &p).is_err());
        assert!(reach_destination(&sys, g, &anchor, &s(&[f64::NAN, 0.0]), 0.05, &theta, &p).is_err());
        let outside = sys.simulate(&s(&[3.0, 0.0]), 10).unwrap();
        assert!(reach_destination(&sys, g, &outside, &s(&[0.0, 0.0]), 0.05, &theta, &p).is_err());
        let bad = RDParams::new(0.0, 1, 0.01, 5);
        assert!(reach_destination(&sys, g, &anchor, &s(&[0.0, 0.0]), 0.05, &theta, &bad).is_err());
    }

    #[test]
    fn axis_direction_examples() {
        assert_eq!(axis_aligned_direction(&s(&[0.9, 0.1])).unwrap(), s(&[1.0, 0.0]));
        assert_eq!(axis_aligned_direction(&s(&[-0.2, -0.8])).unwrap(), s(&[0.0, -1.0]));
        assert_eq!(axis_aligned_direction(&s(&[0.5, 0.5])).unwrap(), s(&[1.0, 0.0]));
        assert_eq!(axis_aligned_direction(&s(&[-0.5, 0.5])).unwrap(), s(&[-1.0, 0.0]));
        assert!(axis_aligned_direction(&s(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn projection_examples() {
        let theta = Hyperbox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(project_to_box(&s(&[0.2, 0.7]), &theta), s(&[0.2, 0.7]));
        assert_eq!(project_to_box(&s(&[2.0, 0.3]), &theta), s(&[1.0, 0.3]));
    }

    #[test]
    fn projection_matches_grid_search() {
        let theta = Hyperbox::new(vec![-0.5, 0.0], vec![1.0, 2.0]).unwrap();
        let res = 200;
        let grid: Vec<State> = (0..=res)
            .flat_map(|i| (0..=res).map(move |j| s(&[-0.5 + 1.5 * i as f64 / res as f64, 2.0 * j as f64 / res as f64])))
            .collect();
        let cell = (1.5f64.powi(2) + 2.0f64.powi(2)).sqrt() / res as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let x = s(&[rng.random_range(-3.0..3.0), rng.random_range(-3.0..4.0)]);
            let brute = grid.iter().min_by(|a, b| (*a - &x).norm().total_cmp(&(*b - &x).norm())).unwrap();
            assert!((project_to_box(&x, &theta) - brute).norm() <= cell);
        }
    }

    #[test]
    fn axis_policy_reaches_on_constant_field() {
        let sys = catalog::constant();
        let theta = sys.initial_set.clone().unwrap();
        let anchor = sys.simulate_full(&s(&[0.0, 0.0])).unwrap();
        let z = &anchor.samples()[100] + s(&[0.3, -0.4]);
        let exact = ExactInverse::new(&sys);
        let params = RDParams::new(0.5, 1, 1e-3, 60).with_policy(DirectionPolicy::AxisAligned);
        let r = reach_destination(&sys, Guide::Vector(&exact), &anchor, &z, 1.0, &theta, &params).unwrap();
        assert!(r.reached(1e-3));
        for rec in &r.log {
            assert!(theta.contains(&rec.x0));
        }
    }

    #[test]
    fn directional_guide_with_oracle_reaches() {
        let sys = catalog::damped_oscillator();
        let theta = sys.initial_set.clone().unwrap();
        let anchor = sys.simulate_full(&theta.center()).unwrap();
        let target = sys.simulate(&s(&[0.6, 0.4]), 150).unwrap().final_state().clone();
        let oracle = OracleDirection::new(sys.clone(), SensitivityKind::Inverse);
        let r =
            reach_destination(&sys, Guide::Directional(&oracle), &anchor, &target, 1.5, &theta, &RDParams::default())
                .unwrap();
        assert!(r.reached(0.004), "{:?}", r.d_a);
    }

    #[test]
    fn json_and_csv_exports() {
        let sys = catalog::constant();
        let theta = sys.initial_set.clone().unwrap();
        let anchor = sys.simulate_full(&s(&[0.0, 0.0])).unwrap();
        let exact = ExactInverse::new(&sys);
        let z = &anchor.samples()[50] + s(&[0.0, 1.0]);
        let r =
            reach_destination(&sys, Guide::Vector(&exact), &anchor, &z, 0.5, &theta, &RDParams::new(0.5, 1, 0.004, 50))
                .unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json(0.004)).unwrap();
        assert_eq!(v["k"], 8);
        assert_eq!(v["iterations"].as_array().unwrap().len(), 9);
        let mut buf = Vec::new();
        r.write_iterations_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,d_a,x0_1,x0_2,xt_1,xt_2\n"));
        assert_eq!(text.lines().count(), 10);
    }

    fn any_system() -> impl Strategy<Value = ClosedLoopSystem> {
        (0usize..5).prop_map(|i| catalog::all().swap_remove(i))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn exact_oracle_progress_is_monotone(
            sys in any_system(),
            seed in any::<u64>(),
            s_val in 0.05f64..0.5,
            p in 1usize..3,
        ) {
            let theta = sys.initial_set.clone().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = theta.sample(&mut rng).unwrap();
            let anchor = sys.simulate_full(&x0).unwrap();
            let index = rng.random_range(20..=sys.max_steps);
            let t = index as f64 * sys.step;
            // A target reachable from inside theta keeps projection inactive near the end.
            let goal = theta.sample(&mut rng).unwrap();
            let z = sys.simulate(&goal, index).unwrap().final_state().clone();
            let exact = ExactInverse::new(&sys);
            let params = RDParams::new(s_val, p, 1e-4, 12);
            let r = reach_destination(&sys, Guide::Vector(&exact), &anchor, &z, t, &theta, &params).unwrap();
            prop_assert_eq!(r.log.len(), r.k + 1);
            prop_assert!(r.k <= params.bound);
            let factor = 1.0 - s_val * p as f64;
            for pair in r.log.windows(2) {
                prop_assert!(theta.contains(&pair[1].x0));
                prop_assert!(pair[1].d_a <= factor * pair[0].d_a + 1e-6 * r.d_init + 1e-9,
                    "{} > {} * {}", pair[1].d_a, factor, pair[0].d_a);
            }
        }
    }
}
