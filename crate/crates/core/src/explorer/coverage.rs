use std::io::Write;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{reach_destination, reach_extreme, Guide, RDParams};
use crate::dynamics::{fmt_f64, time_to_index, ClosedLoopSystem};
use crate::error::{Error, Result};
use crate::parallel::map_ordered;
use crate::region::Hyperbox;
use crate::State;

/// Unit directions whose extremes bound the reachable set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    #[serde(with = "crate::serde_state::many")]
    pub directions: Vec<State>,
}

impl TemplateSet {
    /// The `2n` directions `±e_i`, ordered `+e_1, -e_1, +e_2, ...`.
    pub fn axes(n: usize) -> Self {
        let directions = (0..n)
            .flat_map(|i| {
                [1.0, -1.0].map(|sign| {
                    let mut e = State::zeros(n);
                    e[i] = sign;
                    e
                })
            })
            .collect();
        Self { directions }
    }

    pub fn new(directions: Vec<State>) -> Result<Self> {
        let n = directions.first().map(|d| d.len()).unwrap_or(0);
        if n == 0 || directions.iter().any(|d| d.len() != n || !(d.norm() > 0.0)) {
            return Err(Error::input("template directions must be nonzero and share a dimension"));
        }
        Ok(Self { directions: directions.into_iter().map(|d| d.normalize()).collect() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub t: f64,
    /// Template directions `d_i` and offsets `b_i` of the halfspaces `d_i·x <= b_i`.
    #[serde(with = "crate::serde_state::many")]
    pub templates: Vec<State>,
    pub offsets: Vec<f64>,
    #[serde(with = "crate::serde_state::many")]
    pub polygon_vertices: Vec<State>,
    #[serde(with = "crate::serde_state::many")]
    pub sampled_targets: Vec<State>,
    pub reached: Vec<bool>,
    #[serde(with = "crate::serde_state::many")]
    pub best_initial_points: Vec<State>,
    pub final_distances: Vec<f64>,
    pub corrections: Vec<usize>,
    pub coverage_fraction: f64,
}

impl CoverageReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV `index,reached,d_a,z_1..z_n,x0_1..x0_n`, one row per target.
    pub fn write_targets_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.sampled_targets.first().map(|z| z.len()).unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string(), "reached".to_string(), "d_a".to_string()];
        header.extend((1..=n).map(|i| format!("z_{i}")));
        header.extend((1..=n).map(|i| format!("x0_{i}")));
        w.write_record(&header)?;
        for i in 0..self.sampled_targets.len() {
            let mut row = vec![i.to_string(), self.reached[i].to_string(), fmt_f64(self.final_distances[i])];
            row.extend(self.sampled_targets[i].iter().map(|v| fmt_f64(*v)));
            row.extend(self.best_initial_points[i].iter().map(|v| fmt_f64(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV `x_1..x_n` of the polygon vertices.
    pub fn write_polygon_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.polygon_vertices.first().map(|z| z.len()).unwrap_or(0);
        let mut w = csv::Writer::from_writer(out);
        w.write_record((1..=n).map(|i| format!("x_{i}")))?;
        for v in &self.polygon_vertices {
            w.write_record(v.iter().map(|c| fmt_f64(*c)))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn combinations(m: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, n, &mut Vec::new(), &mut out);
    out
}

fn feasible(dirs: &[State], offsets: &[f64], x: &State, tol: f64) -> bool {
    dirs.iter().zip(offsets).all(|(d, b)| d.dot(x) <= b + tol)
}

/// Vertices of `{x : d_i·x <= b_i}` by intersecting every `n` of the hyperplanes.
fn polytope_vertices(dirs: &[State], offsets: &[f64], tol: f64) -> Vec<State> {
    let n = dirs[0].len();
    let mut out: Vec<State> = Vec::new();
    for idx in combinations(dirs.len(), n) {
        let a = DMatrix::from_fn(n, n, |r, c| dirs[idx[r]][c]);
        let b = State::from_fn(n, |r, _| offsets[idx[r]]);
        if a.determinant().abs() < 1e-12 {
            continue;
        }
        if let Some(x) = a.lu().solve(&b) {
            if feasible(dirs, offsets, &x, tol) && !out.iter().any(|v| (v - &x).norm() <= tol) {
                out.push(x);
            }
        }
    }
    out
}

fn run_targets(
    system: &ClosedLoopSystem,
    guide: Guide<'_>,
    theta: &Hyperbox,
    t: f64,
    targets: Vec<State>,
    params: &RDParams,
) -> Result<CoverageReport> {
    let index = time_to_index(t, system.step)?;
    let anchor = system.simulate(&theta.center(), index.max(1))?;
    let t = index as f64 * system.step;
    let results = map_ordered(&targets, |_, z| reach_destination(system, guide, &anchor, z, t, theta, params));
    let mut reached = Vec::with_capacity(targets.len());
    let mut best = Vec::with_capacity(targets.len());
    let mut dist = Vec::with_capacity(targets.len());
    let mut ks = Vec::with_capacity(targets.len());
    for r in results {
        let r = r?;
        reached.push(r.aborted.is_none() && r.reached(params.delta));
        let b = r.best();
        best.push(b.x0.clone());
        dist.push(b.d_a);
        ks.push(r.k);
    }
    let hits = reached.iter().filter(|r| **r).count();
    Ok(CoverageReport {
        t,
        templates: Vec::new(),
        offsets: Vec::new(),
        polygon_vertices: Vec::new(),
        coverage_fraction: hits as f64 / targets.len() as f64,
        sampled_targets: targets,
        reached,
        best_initial_points: best,
        final_distances: dist,
        corrections: ks,
    })
}

/// Runs the search from the centre of `theta` toward each given target.
pub fn coverage_of_targets(
    system: &ClosedLoopSystem,
    guide: Guide<'_>,
    theta: &Hyperbox,
    t: f64,
    targets: Vec<State>,
    params: &RDParams,
) -> Result<CoverageReport> {
    if targets.is_empty() {
        return Err(Error::input("need at least one target"));
    }
    if targets.iter().any(|z| z.len() != system.dim()) {
        return Err(Error::input("target dimension differs from the system"));
    }
    run_targets(system, guide, theta, t, targets, params)
}

/// Bounds the reachable set at `t` by extremes along `templates`, samples
/// `num_targets` points uniformly from that polytope and tries to reach each.
#[allow(clippy::too_many_arguments)]
pub fn coverage(
    system: &ClosedLoopSystem,
    guide: Guide<'_>,
    theta: &Hyperbox,
    t: f64,
    num_targets: usize,
    params: &RDParams,
    templates: &TemplateSet,
    seed: u64,
) -> Result<CoverageReport> {
    if num_targets == 0 {
        return Err(Error::input("need at least one target"));
    }
    if !theta.is_bounded() {
        return Err(Error::input("coverage needs a bounded initial set"));
    }
    let n = system.dim();
    if templates.directions.iter().any(|d| d.len() != n) {
        return Err(Error::input("template dimension differs from the system"));
    }
    let index = time_to_index(t, system.step)?;
    let anchor = system.simulate(&theta.center(), index.max(1))?;
    let offsets = templates
        .directions
        .iter()
        .map(|d| reach_extreme(system, guide, &anchor, t, d, theta, params).map(|e| d.dot(&e.x_t)))
        .collect::<Result<Vec<_>>>()?;
    let dirs = &templates.directions;
    let scale = offsets.iter().fold(1.0f64, |m, b| m.max(b.abs()));
    let tol = 1e-9 * scale;
    let vertices = polytope_vertices(dirs, &offsets, tol);
    if vertices.is_empty() {
        return Err(Error::input("template directions do not bound a polytope"));
    }
    let lo: Vec<f64> = (0..n).map(|i| vertices.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..n).map(|i| vertices.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let bbox = Hyperbox::new(lo, hi)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut targets = Vec::with_capacity(num_targets);
    let mut tries = 0usize;
    while targets.len() < num_targets {
        tries += 1;
        if tries > 10_000 * num_targets.max(10) {
            return Err(Error::input("could not sample from the bounding polytope"));
        }
        let z = bbox.sample(&mut rng)?;
        if feasible(dirs, &offsets, &z, tol) {
            targets.push(z);
        }
    }
    let mut report = run_targets(system, guide, theta, t, targets, params)?;
    report.templates = dirs.clone();
    report.offsets = offsets;
    report.polygon_vertices = vertices;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::ExactInverse;
    use crate::dynamics::catalog;

    #[test]
    fn axis_templates_give_box_corners() {
        let t = TemplateSet::axes(2);
        let v = polytope_vertices(&t.directions, &[1.0, 0.5, 2.0, 1.0], 1e-12);
        assert_eq!(v.len(), 4);
        for c in Hyperbox::new(vec![-0.5, -1.0], vec![1.0, 2.0]).unwrap().corners() {
            assert!(v.iter().any(|x| (x - &c).norm() < 1e-12));
        }
    }

    #[test]
    fn general_templates_give_polygon() {
        // A diamond |x| + |y| <= 1.
        let dirs: Vec<State> =
            [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]].iter().map(|d| State::from_column_slice(d)).collect();
        let t = TemplateSet::new(dirs).unwrap();
        let b = vec![1.0 / 2f64.sqrt(); 4];
        let v = polytope_vertices(&t.directions, &b, 1e-12);
        assert_eq!(v.len(), 4);
        assert!(v.iter().all(|x| (x.abs().sum() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_target_at_anchor_is_covered() {
        let sys = catalog::vanderpol();
        let theta = sys.initial_set.clone().unwrap();
        let anchor = sys.simulate(&theta.center(), 100).unwrap();
        let exact = ExactInverse::new(&sys);
        let r = coverage_of_targets(
            &sys,
            Guide::Vector(&exact),
            &theta,
            1.0,
            vec![anchor.final_state().clone()],
            &RDParams::default(),
        )
        .unwrap();
        assert_eq!(r.coverage_fraction, 1.0);
        assert_eq!(r.corrections, vec![0]);
    }

    #[test]
    fn polygon_coverage_is_deterministic() {
        let sys = catalog::damped_oscillator();
        let theta = sys.initial_set.clone().unwrap();
        let exact = ExactInverse::new(&sys);
        let params = RDParams::new(0.5, 2, 0.004, 20);
        let run = || coverage(&sys, Guide::Vector(&exact), &theta, 1.0, 12, &params, &TemplateSet::axes(2), 3).unwrap();
        let a = run();
        assert_eq!(a.to_json(), run().to_json());
        assert_eq!(a.polygon_vertices.len(), 4);
        assert_eq!(a.sampled_targets.len(), 12);
        let hits = a.reached.iter().filter(|r| **r).count();
        assert_eq!(a.coverage_fraction, hits as f64 / 12.0);
        for z in &a.sampled_targets {
            assert!(feasible(&a.templates, &a.offsets, z, 1e-9));
        }
    }
}
