//! Training tuples built from pairs of neighbouring trajectories.
//!
//! Every anchor trajectory gets `num_neighbors` companions started on a sphere
//! of radius `neighbor_radius` around its initial state. For a pair `(a, b)`
//! and a grid time `t`, the inverse tuple is
//! `x_t = a(t)`, `v = b(t) - a(t)`, `v_minus = b(0) - a(0)`; the forward tuple
//! swaps the roles of the time-0 and time-t displacements. Only unit
//! directions are used as network inputs and labels; magnitudes are kept
//! alongside for diagnostics and magnitude fitting.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{fmt_f64, ClosedLoopSystem, Trajectory};
use crate::error::{Error, Result};
use crate::region::Hyperbox;
use crate::State;

/// Displacements shorter than this are treated as collapsed.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensitivityKind {
    Inverse,
    Forward,
}

impl std::fmt::Display for SensitivityKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SensitivityKind::Inverse => "inverse",
            SensitivityKind::Forward => "forward",
        })
    }
}

impl std::str::FromStr for SensitivityKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inverse" => Ok(Self::Inverse),
            "forward" => Ok(Self::Forward),
            other => Err(Error::input(format!("unknown sensitivity kind `{other}`"))),
        }
    }
}

/// One `(x_t, v_hat, t) -> d_hat` training example.
///
/// For forward tuples `x_t` holds the anchor's initial state and `mag_vminus`
/// the magnitude of the time-`t` displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTuple {
    pub x_t: State,
    pub v_hat: State,
    pub t: f64,
    pub d_hat: State,
    pub mag_v: f64,
    pub mag_vminus: f64,
    pub kind: SensitivityKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub num_anchors: usize,
    pub num_neighbors: usize,
    pub neighbor_radius: f64,
    pub time_subsample: usize,
    pub kind: SensitivityKind,
    pub seed: u64,
    pub theta: Hyperbox,
    pub max_steps: usize,
    /// Pairs dropped because the displacement collapsed.
    #[serde(default)]
    pub skipped: usize,
}

impl GenerationConfig {
    /// 40 anchors, 10 neighbours at radius 0.01, every 5th time step.
    pub fn standard(theta: Hyperbox, kind: SensitivityKind, seed: u64) -> Self {
        Self {
            num_anchors: 40,
            num_neighbors: 10,
            neighbor_radius: 0.01,
            time_subsample: 5,
            kind,
            seed,
            theta,
            max_steps: 0,
            skipped: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityDataset {
    pub system_name: String,
    pub step: f64,
    pub tuples: Vec<SampleTuple>,
    pub config: GenerationConfig,
}

/// Anchors and their neighbour groups, as simulated.
#[derive(Debug, Clone)]
pub struct TrajectoryGroups {
    pub anchors: Vec<Trajectory>,
    pub neighbors: Vec<Vec<Trajectory>>,
}

/// Uniform direction on the unit sphere.
pub fn random_unit<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> State {
    loop {
        let v = State::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm = v.norm();
        if norm > 1e-9 {
            return v / norm;
        }
    }
}

/// Samples and simulates anchors and neighbours for `config`.
pub fn simulate_groups(system: &ClosedLoopSystem, config: &GenerationConfig) -> Result<TrajectoryGroups> {
    let n = system.dim();
    if config.theta.dim() != n {
        return Err(Error::input("initial set dimension does not match the system"));
    }
    if !(config.neighbor_radius > 0.0) {
        return Err(Error::input("neighbor_radius must be positive"));
    }
    if config.time_subsample == 0 || config.num_anchors == 0 || config.num_neighbors == 0 {
        return Err(Error::input("anchors, neighbors and time_subsample must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut anchors = Vec::with_capacity(config.num_anchors);
    let mut neighbors = Vec::with_capacity(config.num_anchors);
    for _ in 0..config.num_anchors {
        let x0 = config.theta.sample(&mut rng)?;
        let group = (0..config.num_neighbors)
            .map(|_| &x0 + random_unit(n, &mut rng) * config.neighbor_radius)
            .collect::<Vec<_>>();
        anchors.push(system.simulate_full(&x0)?);
        neighbors.push(group.iter().map(|y0| system.simulate_full(y0)).collect::<Result<Vec<_>>>()?);
    }
    Ok(TrajectoryGroups { anchors, neighbors })
}

/// Builds one tuple from a trajectory pair at sample index `k`, or `None` when degenerate.
pub fn tuple_from_pair(a: &Trajectory, b: &Trajectory, k: usize, kind: SensitivityKind) -> Option<SampleTuple> {
    let v0 = b.initial_state() - a.initial_state();
    let vk = &b.samples()[k] - &a.samples()[k];
    let (x, input, label) = match kind {
        SensitivityKind::Inverse => (a.samples()[k].clone(), vk, v0),
        SensitivityKind::Forward => (a.initial_state().clone(), v0, vk),
    };
    let (mi, ml) = (input.norm(), label.norm());
    if mi < DEGENERATE_NORM || ml < DEGENERATE_NORM || !mi.is_finite() || !ml.is_finite() {
        return None;
    }
    Some(SampleTuple {
        x_t: x,
        v_hat: input / mi,
        t: k as f64 * a.step(),
        d_hat: label / ml,
        mag_v: mi,
        mag_vminus: ml,
        kind,
    })
}

/// Generates a dataset; ordering is by (anchor, neighbour, time).
pub fn generate_dataset(system: &ClosedLoopSystem, config: &GenerationConfig) -> Result<SensitivityDataset> {
    let groups = simulate_groups(system, config)?;
    let mut config = config.clone();
    config.max_steps = system.max_steps;
    let times: Vec<usize> = (1..=system.max_steps / config.time_subsample).map(|i| i * config.time_subsample).collect();
    let mut tuples = Vec::with_capacity(config.num_anchors * config.num_neighbors * times.len());
    let mut skipped = 0;
    for (a, group) in groups.anchors.iter().zip(&groups.neighbors) {
        for b in group {
            for &k in &times {
                match tuple_from_pair(a, b, k, config.kind) {
                    Some(t) => tuples.push(t),
                    None => skipped += 1,
                }
            }
        }
    }
    if tuples.is_empty() {
        return Err(Error::Generation(format!("all {skipped} candidate tuples were degenerate")));
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} degenerate tuples", system.name);
    }
    config.skipped = skipped;
    Ok(SensitivityDataset { system_name: system.name.clone(), step: system.step, tuples, config })
}

impl SensitivityDataset {
    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.tuples.first().map(|t| t.x_t.len()).unwrap_or(0)
    }

    pub fn kind(&self) -> SensitivityKind {
        self.config.kind
    }

    /// Horizon used to normalize the time input.
    pub fn horizon(&self) -> f64 {
        self.config.max_steps as f64 * self.step
    }

    fn with_tuples(&self, tuples: Vec<SampleTuple>) -> Self {
        Self { system_name: self.system_name.clone(), step: self.step, tuples, config: self.config.clone() }
    }

    /// Random partition with `round(train_fraction * len)` training tuples.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::input(format!("train fraction must lie in (0, 1), got {train_fraction}")));
        }
        if self.len() < 2 {
            return Err(Error::input("need at least two tuples to split"));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((train_fraction * self.len() as f64).round() as usize).clamp(1, self.len() - 1);
        let pick = |ids: &[usize]| ids.iter().map(|&i| self.tuples[i].clone()).collect::<Vec<_>>();
        Ok((self.with_tuples(pick(&idx[..n_train])), self.with_tuples(pick(&idx[n_train..]))))
    }

    /// CSV with header `kind,t,x_t_1..,vhat_1..,dhat_1..,mag_v,mag_vminus`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["kind".to_string(), "t".to_string()];
        for prefix in ["x_t", "vhat", "dhat"] {
            header.extend((1..=n).map(|i| format!("{prefix}_{i}")));
        }
        header.push("mag_v".into());
        header.push("mag_vminus".into());
        w.write_record(&header)?;
        for tp in &self.tuples {
            let mut row = vec![tp.kind.to_string(), fmt_f64(tp.t)];
            for v in [&tp.x_t, &tp.v_hat, &tp.d_hat] {
                row.extend(v.iter().map(|x| fmt_f64(*x)));
            }
            row.push(fmt_f64(tp.mag_v));
            row.push(fmt_f64(tp.mag_vminus));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, system_name: &str, step: f64, config: GenerationConfig) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let width = r.headers()?.len();
        if width < 5 || (width - 4) % 3 != 0 {
            return Err(Error::Parse { path: "header".into(), message: format!("unexpected column count {width}") });
        }
        let n = (width - 4) / 3;
        let mut tuples = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| Error::Parse {
                    path: format!("row {} column {}", line + 1, i + 1),
                    message: e.to_string(),
                })
            };
            let vec_at = |start: usize| -> Result<State> {
                Ok(State::from_vec((start..start + n).map(num).collect::<Result<Vec<_>>>()?))
            };
            tuples.push(SampleTuple {
                kind: rec[0].parse()?,
                t: num(1)?,
                x_t: vec_at(2)?,
                v_hat: vec_at(2 + n)?,
                d_hat: vec_at(2 + 2 * n)?,
                mag_v: num(2 + 3 * n)?,
                mag_vminus: num(3 + 3 * n)?,
            });
        }
        if tuples.iter().any(|t| t.kind != config.kind) {
            return Err(Error::Parse { path: "kind".into(), message: "tuple kinds disagree with config".into() });
        }
        Ok(Self { system_name: system_name.to_string(), step, tuples, config })
    }

    /// Writes `<stem>.csv` and the `<stem>.json` sidecar.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(csv_path)?)?;
        let sidecar = Sidecar { system_name: self.system_name.clone(), step: self.step, config: self.config.clone() };
        std::fs::write(csv_path.with_extension("json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(csv_path.with_extension("json"))?;
        let sidecar: Sidecar = serde_json::from_str(&text)?;
        Self::read_csv(std::fs::File::open(csv_path)?, &sidecar.system_name, sidecar.step, sidecar.config)
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    system_name: String,
    step: f64,
    config: GenerationConfig,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::catalog;

    fn small_config(theta: Hyperbox, kind: SensitivityKind) -> GenerationConfig {
        GenerationConfig {
            num_anchors: 3,
            num_neighbors: 2,
            neighbor_radius: 0.01,
            time_subsample: 10,
            kind,
            seed: 7,
            theta,
            max_steps: 0,
            skipped: 0,
        }
    }

    fn short(sys: ClosedLoopSystem, steps: usize) -> ClosedLoopSystem {
        ClosedLoopSystem { max_steps: steps, ..sys }
    }

    #[test]
    fn tuple_count() {
        let sys = short(catalog::damped_oscillator(), 50);
        let ds =
            generate_dataset(&sys, &small_config(sys.initial_set.clone().unwrap(), SensitivityKind::Inverse)).unwrap();
        assert_eq!(ds.len(), 3 * 2 * 5);
        assert_eq!(ds.config.skipped, 0);
    }

    #[test]
    fn constant_field_labels_equal_inputs() {
        let sys = short(catalog::constant(), 50);
        let ds =
            generate_dataset(&sys, &small_config(sys.initial_set.clone().unwrap(), SensitivityKind::Inverse)).unwrap();
        for t in &ds.tuples {
            assert!((&t.d_hat - &t.v_hat).norm() < 1e-9);
            assert!((t.mag_v - t.mag_vminus).abs() < 1e-12);
        }
    }

    #[test]
    fn labels_are_unit_and_consistent() {
        let sys = short(catalog::vanderpol(), 60);
        let cfg = small_config(sys.initial_set.clone().unwrap(), SensitivityKind::Inverse);
        let groups = simulate_groups(&sys, &cfg).unwrap();
        for (a, group) in groups.anchors.iter().zip(&groups.neighbors) {
            for b in group {
                for k in [10usize, 30, 60] {
                    let tp = tuple_from_pair(a, b, k, SensitivityKind::Inverse).unwrap();
                    assert!((tp.v_hat.norm() - 1.0).abs() < 1e-9 && (tp.d_hat.norm() - 1.0).abs() < 1e-9);
                    // Re-simulate from the labelled initial perturbation.
                    let y0 = a.initial_state() + &tp.d_hat * tp.mag_vminus;
                    let y = sys.simulate(&y0, k).unwrap();
                    let want = &tp.x_t + &tp.v_hat * tp.mag_v;
                    assert!((y.final_state() - want).norm() < 1e-9);
                    // Prefix reuse: tuples at k come from the same full simulations.
                    assert_eq!(&tp.x_t, &a.samples()[k]);
                }
            }
        }
    }

    #[test]
    fn forward_tuples_swap_roles() {
        let sys = short(catalog::rotation(), 40);
        let ds =
            generate_dataset(&sys, &small_config(sys.initial_set.clone().unwrap(), SensitivityKind::Forward)).unwrap();
        // Rotation preserves lengths, and forward inputs sit at the anchor start.
        for t in &ds.tuples {
            assert!((t.mag_v - 0.01).abs() < 1e-12);
            assert!((t.mag_vminus - 0.01).abs() < 1e-9);
        }
    }

    #[test]
    fn all_degenerate_is_an_error() {
        let sys = short(catalog::constant(), 20);
        let mut cfg = small_config(sys.initial_set.clone().unwrap(), SensitivityKind::Inverse);
        cfg.neighbor_radius = 1e-14;
        assert!(matches!(generate_dataset(&sys, &cfg), Err(Error::Generation(_))));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let sys = short(catalog::damped_oscillator(), 50);
        let ds =
            generate_dataset(&sys, &small_config(sys.initial_set.clone().unwrap(), SensitivityKind::Inverse)).unwrap();
        let (tr, te) = ds.split(0.9, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (27, 3));
        let mut all: Vec<String> = tr.tuples.iter().chain(&te.tuples).map(|t| format!("{t:?}")).collect();
        let mut orig: Vec<String> = ds.tuples.iter().map(|t| format!("{t:?}")).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
        assert!(ds.split(1.0, 0).is_err());
    }

    #[test]
    fn split_seed_sensitivity() {
        let sys = short(catalog::damped_oscillator(), 100);
        let mut cfg = small_config(sys.initial_set.clone().unwrap(), SensitivityKind::Inverse);
        cfg.num_anchors = 10;
        cfg.num_neighbors = 10;
        let ds = generate_dataset(&sys, &cfg).unwrap();
        assert_eq!(ds.len(), 1000);
        let a = ds.split(0.9, 1).unwrap();
        let b = ds.split(0.9, 1).unwrap();
        let c = ds.split(0.9, 2).unwrap();
        assert_eq!(a.0, b.0);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn csv_roundtrip() {
        let sys = short(catalog::poly3d(), 30);
        let ds =
            generate_dataset(&sys, &small_config(sys.initial_set.clone().unwrap(), SensitivityKind::Inverse)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        ds.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.starts_with("kind,t,x_t_1,x_t_2,x_t_3,vhat_1,vhat_2,vhat_3,dhat_1,dhat_2,dhat_3,mag_v,mag_vminus\n")
        );
        assert_eq!(SensitivityDataset::load(&path).unwrap(), ds);
    }
}
