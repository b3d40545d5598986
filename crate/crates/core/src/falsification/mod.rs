//! Falsification of `never reach U during [t_lo, t_hi]` specifications.
//!
//! Robustness is the minimum, over grid times in the interval, of the signed
//! distance to the unsafe box. [`falsify_rd`] drives the reach-destination
//! search toward a sampled unsafe state; [`falsify_baseline`] is a plain
//! simulated-annealing search over initial states for comparison.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{time_to_index, ClosedLoopSystem, Trajectory};
use crate::error::{Error, Result};
use crate::explorer::{axis_aligned_direction, DirectionPolicy, Guide, RDParams};
use crate::region::Hyperbox;
use crate::State;

/// Attempts at drawing a non-falsifying initial anchor.
const ANCHOR_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetySpec {
    pub unsafe_box: Hyperbox,
    /// `[t_lo, t_hi]` in seconds.
    pub interval: [f64; 2],
}

impl SafetySpec {
    pub fn new(unsafe_box: Hyperbox, t_lo: f64, t_hi: f64) -> Result<Self> {
        let spec = Self { unsafe_box, interval: [t_lo, t_hi] };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.interval;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::input(format!("interval [{lo}, {hi}] is invalid")));
        }
        Hyperbox::new(self.unsafe_box.lo.clone(), self.unsafe_box.hi.clone()).map(|_| ())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Parse { path: e.path().to_string(), message: e.inner().to_string() })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Grid indices covered by the interval.
    fn indices(&self, step: f64, steps: usize) -> Result<std::ops::RangeInclusive<usize>> {
        let [lo, hi] = self.interval;
        let first = (lo / step - 1e-9).ceil().max(0.0) as usize;
        let last = (hi / step + 1e-9).floor() as usize;
        if first > last {
            return Err(Error::input(format!("interval [{lo}, {hi}] contains no grid time")));
        }
        if last > steps {
            return Err(Error::input(format!("interval ends at {hi}, beyond the trajectory horizon")));
        }
        Ok(first..=last)
    }
}

/// Signed robustness; negative exactly when some sample in the interval is inside `U`.
pub fn robustness(traj: &Trajectory, spec: &SafetySpec) -> Result<f64> {
    if traj.dim() != spec.unsafe_box.dim() {
        return Err(Error::input("trajectory and unsafe box dimensions differ"));
    }
    let range = spec.indices(traj.step(), traj.steps())?;
    Ok(traj.samples()[range].iter().map(|x| spec.unsafe_box.signed_distance(x)).fold(f64::INFINITY, f64::min))
}

/// Samples `z` uniformly in `U` and picks the grid time in the interval where
/// the anchor is closest to it (earliest on ties).
pub fn pick_target(spec: &SafetySpec, anchor: &Trajectory, seed: u64) -> Result<(State, f64)> {
    let range = spec.indices(anchor.step(), anchor.steps())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = spec.unsafe_box.sample(&mut rng)?;
    let mut best = (*range.start(), f64::INFINITY);
    for i in range {
        let d = (&anchor.samples()[i] - &z).norm();
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok((z, best.0 as f64 * anchor.step()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FalsificationResult {
    pub falsified: bool,
    /// Simulations generated (after the initial anchor for the guided search).
    pub k: usize,
    pub rho: f64,
    pub trajectory: Trajectory,
    pub per_iteration_rho: Vec<f64>,
}

#[derive(Serialize)]
struct FalsificationExport<'a> {
    falsified: bool,
    k: usize,
    rho: f64,
    #[serde(serialize_with = "crate::serde_state::serialize")]
    initial_state: &'a State,
    per_iteration_rho: &'a [f64],
}

impl FalsificationResult {
    /// `{falsified, k, rho, initial_state, per_iteration_rho}`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FalsificationExport {
            falsified: self.falsified,
            k: self.k,
            rho: self.rho,
            initial_state: self.trajectory.initial_state(),
            per_iteration_rho: &self.per_iteration_rho,
        })
        .expect("result serializes")
    }
}

fn horizon_for(system: &ClosedLoopSystem, spec: &SafetySpec) -> Result<usize> {
    let end = time_to_index(spec.interval[1], system.step)?;
    if end > system.max_steps {
        return Err(Error::input("interval extends past the system horizon"));
    }
    Ok(end.max(1))
}

/// Reach-destination search that stops on the first falsifying trajectory.
///
/// The initial anchor is drawn uniformly from `theta`, redrawn while it
/// already falsifies. The distance test is replaced by robustness and the
/// search also stops once `x_t` enters `U`. Returns the lowest-robustness
/// trajectory seen.
pub fn falsify_rd(
    system: &ClosedLoopSystem,
    guide: Guide<'_>,
    theta: &Hyperbox,
    spec: &SafetySpec,
    params: &RDParams,
    seed: u64,
) -> Result<FalsificationResult> {
    params.validate()?;
    spec.validate()?;
    if theta.dim() != system.dim() || spec.unsafe_box.dim() != system.dim() {
        return Err(Error::input("initial set, unsafe box and system dimensions differ"));
    }
    let steps = horizon_for(system, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut accepted = None;
    for _ in 0..ANCHOR_ATTEMPTS {
        let traj = system.simulate(&theta.sample(&mut rng)?, steps)?;
        let rho = robustness(&traj, spec)?;
        if rho >= 0.0 {
            accepted = Some((traj, rho));
            break;
        }
    }
    let (anchor, mut rho) =
        accepted.ok_or_else(|| Error::input("every sampled initial state already violates the specification"))?;
    let (z, t) = pick_target(spec, &anchor, rng.random())?;
    let index = time_to_index(t, system.step)?;

    let mut x0 = anchor.initial_state().clone();
    let mut x_t = anchor.samples()[index].clone();
    let mut best = (rho, anchor);
    let mut per_iteration_rho = vec![rho];
    let mut k = 0;
    while rho > 0.0 && !spec.unsafe_box.contains(&x_t) && k < params.bound {
        let w = &z - &x_t;
        let v = match params.policy {
            DirectionPolicy::StraightLine => &w * params.s,
            DirectionPolicy::AxisAligned => {
                let e = axis_aligned_direction(&w)?;
                &e * (params.s * w.dot(&e))
            }
        };
        for _ in 0..params.p {
            let v_minus = match guide {
                Guide::Vector(n) => n.estimate(&x_t, &v, t)?,
                Guide::Directional(n) => n.predict(&x_t, &v.normalize(), t)? * (params.s * v.norm()),
            };
            x0 = theta.project(&(&x0 + v_minus));
            x_t += &v;
        }
        let traj = system.simulate(&x0, steps)?;
        k += 1;
        rho = robustness(&traj, spec)?;
        per_iteration_rho.push(rho);
        x_t = traj.samples()[index].clone();
        if rho < best.0 {
            best = (rho, traj);
        }
    }
    Ok(FalsificationResult { falsified: best.0 < 0.0, k, rho: best.0, trajectory: best.1, per_iteration_rho })
}

/// Simulated annealing over initial states in `theta`.
///
/// Proposals add Gaussian noise with standard deviation 10% of each axis
/// width and are clamped to `theta`. A worse proposal is accepted with
/// probability `exp(-beta * Δρ / ρ_scale)`, `ρ_scale` being the first `|ρ|`.
/// Stops at the first falsifying trajectory or after `budget` simulations.
pub fn falsify_baseline(
    system: &ClosedLoopSystem,
    theta: &Hyperbox,
    spec: &SafetySpec,
    budget: usize,
    beta: f64,
    seed: u64,
) -> Result<FalsificationResult> {
    spec.validate()?;
    if budget == 0 {
        return Err(Error::input("budget must be at least 1"));
    }
    if !(beta >= 0.0) {
        return Err(Error::input("beta must be non-negative"));
    }
    if theta.dim() != system.dim() || spec.unsafe_box.dim() != system.dim() {
        return Err(Error::input("initial set, unsafe box and system dimensions differ"));
    }
    let steps = horizon_for(system, spec)?;
    let sigma: Vec<f64> = theta.widths().iter().map(|w| 0.1 * w).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut x = theta.sample(&mut rng)?;
    let traj = system.simulate(&x, steps)?;
    let mut rho = robustness(&traj, spec)?;
    let scale = if rho.abs() > 0.0 { rho.abs() } else { 1.0 };
    let mut best = (rho, traj);
    let mut per_iteration_rho = vec![rho];
    let mut k = 1;
    while k < budget && best.0 >= 0.0 {
        let proposal = theta.project(&State::from_fn(x.len(), |i, _| {
            let n: f64 = rng.sample(StandardNormal);
            x[i] + sigma[i] * n
        }));
        let traj = system.simulate(&proposal, steps)?;
        k += 1;
        let r = robustness(&traj, spec)?;
        per_iteration_rho.push(r);
        let u: f64 = rng.random();
        if r < rho || u < (-beta * (r - rho) / scale).exp() {
            x = proposal;
            rho = r;
        }
        if r < best.0 {
            best = (r, traj);
        }
    }
    Ok(FalsificationResult { falsified: best.0 < 0.0, k, rho: best.0, trajectory: best.1, per_iteration_rho })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::approximator::ExactInverse;
    use crate::dynamics::catalog;

    fn s(v: &[f64]) -> State {
        State::from_column_slice(v)
    }

    fn still(x: &[f64], steps: usize) -> Trajectory {
        Trajectory::new(0.01, vec![s(x); steps + 1]).unwrap()
    }

    fn unit_square(t_lo: f64, t_hi: f64) -> SafetySpec {
        SafetySpec::new(Hyperbox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), t_lo, t_hi).unwrap()
    }

    #[test]
    fn robustness_examples() {
        let spec = unit_square(0.0, 0.5);
        assert!((robustness(&still(&[0.5, 0.5], 100), &spec).unwrap() + 0.5).abs() < 1e-15);
        assert!((robustness(&still(&[2.0, 0.5], 100), &spec).unwrap() - 1.0).abs() < 1e-15);
        assert!(robustness(&still(&[2.0, 0.5], 10), &spec).is_err());
    }

    #[test]
    fn robustness_matches_fine_resimulation() {
        // Constant field crossing the box; a 10x finer grid bounds the sampling error.
        let sys = catalog::constant();
        let spec = SafetySpec::new(Hyperbox::new(vec![0.55, 0.2], vec![0.9, 0.8]).unwrap(), 0.0, 2.0).unwrap();
        let x0 = s(&[-0.5, 0.9]);
        let coarse = sys.simulate(&x0, 200).unwrap();
        let fine_sys = ClosedLoopSystem { step: 0.001, max_steps: 2000, ..sys.clone() };
        let fine = fine_sys.simulate(&x0, 2000).unwrap();
        let r_coarse = robustness(&coarse, &spec).unwrap();
        let r_fine = robustness(&fine, &spec).unwrap();
        let per_step = sys.field(&x0).norm() * sys.step;
        assert!(r_coarse >= r_fine - 1e-12 && r_coarse - r_fine <= per_step + 1e-12);
    }

    #[test]
    fn spec_file_round_trip_and_errors() {
        let spec = unit_square(0.1, 0.4);
        assert_eq!(SafetySpec::parse(&spec.to_json()).unwrap(), spec);
        let text = r#"{"unsafe_box": {"lo": [0, 0], "hi": [1, 1]}, "interval": [0.5, 0.2]}"#;
        assert!(SafetySpec::parse(text).is_err());
        let text = r#"{"unsafe_box": {"lo": [0, "a"], "hi": [1, 1]}, "interval": [0, 1]}"#;
        match SafetySpec::parse(text) {
            Err(Error::Parse { path, .. }) => assert!(path.contains("unsafe_box.lo"), "{path}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pick_target_examples() {
        let sys = catalog::vanderpol();
        let anchor = sys.simulate_full(&s(&[0.7, 0.2])).unwrap();
        let single = SafetySpec::new(Hyperbox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), 0.37, 0.37).unwrap();
        for seed in 0..5 {
            assert!((pick_target(&single, &anchor, seed).unwrap().1 - 0.37).abs() < 1e-12);
        }
        let point = SafetySpec::new(Hyperbox::point(&s(&[0.3, -0.1])), 0.0, 2.0).unwrap();
        let (z, t) = pick_target(&point, &anchor, 1).unwrap();
        assert_eq!(z, s(&[0.3, -0.1]));
        let scan = (0..=200)
            .min_by(|a, b| (&anchor.samples()[*a] - &z).norm().total_cmp(&(&anchor.samples()[*b] - &z).norm()))
            .unwrap();
        assert!((t - scan as f64 * 0.01).abs() < 1e-12);
        assert_eq!(pick_target(&point, &anchor, 1).unwrap(), (z, t));
    }

    fn reachable_spec(sys: &ClosedLoopSystem, x_bad: &[f64], index: usize, half: f64) -> SafetySpec {
        let c = sys.simulate(&s(x_bad), index).unwrap().final_state().clone();
        let lo = c.iter().map(|v| v - half).collect();
        let hi = c.iter().map(|v| v + half).collect();
        SafetySpec::new(Hyperbox::new(lo, hi).unwrap(), 0.5, 1.5).unwrap()
    }

    #[test]
    fn rd_falsifies_reachable_unsafe_set() {
        let sys = catalog::damped_oscillator();
        let theta = sys.initial_set.clone().unwrap();
        let spec = reachable_spec(&sys, &[0.8, 0.3], 100, 0.02);
        let exact = ExactInverse::new(&sys);
        let r = falsify_rd(&sys, Guide::Vector(&exact), &theta, &spec, &RDParams::default(), 3).unwrap();
        assert!(r.falsified && r.rho < 0.0 && r.k <= 50);
        assert_eq!(r.per_iteration_rho.len(), r.k + 1);
        assert!((robustness(&r.trajectory, &spec).unwrap() - r.rho).abs() < 1e-15);
    }

    #[test]
    fn unreachable_unsafe_set_exhausts_budget() {
        let sys = catalog::damped_oscillator();
        let theta = sys.initial_set.clone().unwrap();
        let spec = SafetySpec::new(Hyperbox::new(vec![5.0, 5.0], vec![6.0, 6.0]).unwrap(), 0.5, 1.5).unwrap();
        let exact = ExactInverse::new(&sys);
        let params = RDParams::new(0.5, 2, 0.004, 12);
        let r = falsify_rd(&sys, Guide::Vector(&exact), &theta, &spec, &params, 1).unwrap();
        assert!(!r.falsified && r.rho > 0.0);
        assert_eq!(r.k, 12);
    }

    #[test]
    fn baseline_examples() {
        let sys = catalog::damped_oscillator();
        let theta = sys.initial_set.clone().unwrap();
        let far = SafetySpec::new(Hyperbox::new(vec![5.0, 5.0], vec![6.0, 6.0]).unwrap(), 0.5, 1.5).unwrap();
        let one = falsify_baseline(&sys, &theta, &far, 1, 50.0, 8).unwrap();
        assert_eq!(one.k, 1);
        assert_eq!(one.per_iteration_rho, vec![one.rho]);
        let everything = SafetySpec::new(Hyperbox::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(), 0.5, 1.0).unwrap();
        let r = falsify_baseline(&sys, &theta, &everything, 30, 50.0, 8).unwrap();
        assert!(r.falsified);
        assert_eq!(r.k, 1);
        let a = falsify_baseline(&sys, &theta, &reachable_spec(&sys, &[0.95, 0.45], 100, 0.02), 40, 50.0, 2).unwrap();
        let b = falsify_baseline(&sys, &theta, &reachable_spec(&sys, &[0.95, 0.45], 100, 0.02), 40, 50.0, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.k <= 40);
    }

    fn arb_box() -> impl Strategy<Value = Hyperbox> {
        (prop::collection::vec(-2.0f64..2.0, 2), prop::collection::vec(0.0f64..1.5, 2))
            .prop_map(|(lo, w)| Hyperbox::new(lo.clone(), lo.iter().zip(&w).map(|(l, w)| l + w).collect()).unwrap())
    }

    fn arb_traj() -> impl Strategy<Value = Trajectory> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 11)
            .prop_map(|pts| Trajectory::new(0.1, pts.into_iter().map(State::from_vec).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn sign_soundness(traj in arb_traj(), b in arb_box()) {
            let spec = SafetySpec::new(b.clone(), 0.2, 0.8).unwrap();
            let rho = robustness(&traj, &spec).unwrap();
            let inside = traj.samples()[2..=8].iter().any(|x| b.contains_strictly(x));
            prop_assert_eq!(rho < 0.0, inside);
        }

        #[test]
        fn translation_equivariance(traj in arb_traj(), b in arb_box(), dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
            let shift = s(&[dx, dy]);
            let spec = SafetySpec::new(b.clone(), 0.0, 1.0).unwrap();
            let moved = Trajectory::new(0.1, traj.samples().iter().map(|x| x + &shift).collect()).unwrap();
            let moved_spec = SafetySpec::new(b.translate(&shift), 0.0, 1.0).unwrap();
            let a = robustness(&traj, &spec).unwrap();
            let c = robustness(&moved, &moved_spec).unwrap();
            prop_assert!((a - c).abs() < 1e-12);
        }

        #[test]
        fn enlarging_unsafe_set_never_increases_rho(traj in arb_traj(), b in arb_box(), grow in prop::collection::vec(0.0f64..1.0, 4)) {
            let big = Hyperbox::new(
                vec![b.lo[0] - grow[0], b.lo[1] - grow[1]],
                vec![b.hi[0] + grow[2], b.hi[1] + grow[3]],
            ).unwrap();
            let small = robustness(&traj, &SafetySpec::new(b, 0.0, 1.0).unwrap()).unwrap();
            let large = robustness(&traj, &SafetySpec::new(big, 0.0, 1.0).unwrap()).unwrap();
            prop_assert!(large <= small + 1e-12);
        }
    }
}
