use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::controller::NeuralController;
use super::plant::{BuiltinField, Monomial, Plant};
use super::trajectory::Trajectory;
use crate::error::{Error, Result};
use crate::region::Hyperbox;
use crate::State;

/// Any coordinate above this magnitude is treated as a blow-up.
pub const BLOWUP_LIMIT: f64 = 1e6;

/// Plant closed with an optional feedback controller, plus the integration grid.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    pub name: String,
    pub plant: Plant,
    pub controller: Option<NeuralController>,
    /// Advisory operating domain; simulation only warns when leaving it.
    pub domain: Option<Hyperbox>,
    /// Default initial set used by data generation and the CLI.
    pub initial_set: Option<Hyperbox>,
    pub step: f64,
    pub max_steps: usize,
}

impl ClosedLoopSystem {
    pub fn new(
        name: impl Into<String>,
        plant: Plant,
        controller: Option<NeuralController>,
        step: f64,
        max_steps: usize,
    ) -> Result<Self> {
        let sys = Self { name: name.into(), plant, controller, domain: None, initial_set: None, step, max_steps };
        sys.validate()?;
        Ok(sys)
    }

    pub fn with_initial_set(mut self, theta: Hyperbox) -> Result<Self> {
        if theta.dim() != self.dim() {
            return Err(Error::input("initial set dimension does not match the system"));
        }
        self.initial_set = Some(theta);
        Ok(self)
    }

    pub fn with_domain(mut self, domain: Hyperbox) -> Result<Self> {
        if domain.dim() != self.dim() {
            return Err(Error::input("domain dimension does not match the system"));
        }
        self.domain = Some(domain);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.plant.state_dim()
    }

    /// Time horizon `T * h`.
    pub fn horizon(&self) -> f64 {
        self.max_steps as f64 * self.step
    }

    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::input(format!("step must be positive, got {}", self.step)));
        }
        if self.max_steps == 0 {
            return Err(Error::input("max_steps must be at least 1"));
        }
        self.plant.validate()?;
        let m = self.plant.control_dim();
        match &self.controller {
            Some(c) => {
                if c.input_dim() != self.dim() || c.output_dim() != m {
                    return Err(Error::input(format!(
                        "controller maps {} -> {} but plant needs {} -> {}",
                        c.input_dim(),
                        c.output_dim(),
                        self.dim(),
                        m
                    )));
                }
            }
            None if m > 0 && !matches!(self.plant, Plant::Builtin(BuiltinField::VanDerPol { .. })) => {
                return Err(Error::input(format!("plant has {m} control inputs but no controller")));
            }
            None => {}
        }
        Ok(())
    }

    /// Closed-loop vector field `f(x, g(x))`.
    pub fn field(&self, x: &State) -> State {
        let u = match &self.controller {
            Some(c) => c.eval_unchecked(x),
            None => DVector::zeros(0),
        };
        self.plant.eval(x, &u)
    }

    fn check_state(&self, x: &State) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::input(format!("state has {} coordinates, system has {}", x.len(), self.dim())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("state must be finite"));
        }
        Ok(())
    }

    fn integrate(&self, x0: &State, steps: usize, direction: f64) -> Result<Trajectory> {
        self.check_state(x0)?;
        if steps > self.max_steps {
            return Err(Error::input(format!("{steps} steps exceed the horizon of {} steps", self.max_steps)));
        }
        if let Some(d) = &self.domain {
            if !d.contains(x0) {
                log::warn!("{}: initial state {:?} lies outside the domain", self.name, x0.as_slice());
            }
        }
        let h = self.step * direction;
        let mut samples = Vec::with_capacity(steps + 1);
        samples.push(x0.clone());
        let mut x = x0.clone();
        for i in 0..steps {
            let k1 = self.field(&x);
            let k2 = self.field(&(&x + &k1 * (0.5 * h)));
            let k3 = self.field(&(&x + &k2 * (0.5 * h)));
            let k4 = self.field(&(&x + &k3 * h));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_LIMIT) {
                return Err(Error::Divergence { last_finite: i });
            }
            samples.push(x.clone());
        }
        Trajectory::new(self.step, samples)
    }

    /// Classical RK4 forward integration for `steps` steps.
    pub fn simulate(&self, x0: &State, steps: usize) -> Result<Trajectory> {
        self.integrate(x0, steps, 1.0)
    }

    /// Integrates the negated field; `samples[i]` approximates the state that
    /// reaches `x1` after `i * h` seconds.
    pub fn simulate_backward(&self, x1: &State, steps: usize) -> Result<Trajectory> {
        self.integrate(x1, steps, -1.0)
    }

    /// Full-horizon forward simulation.
    pub fn simulate_full(&self, x0: &State) -> Result<Trajectory> {
        self.simulate(x0, self.max_steps)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlantRecord {
    Builtin(BuiltinField),
    Linear {
        a: Vec<Vec<f64>>,
        #[serde(default)]
        b: Vec<Vec<f64>>,
    },
    Polynomial {
        #[serde(default)]
        control_dim: usize,
        equations: Vec<Vec<Monomial>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoxRecord {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// System specification file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SystemFile {
    pub name: String,
    pub dimension: usize,
    pub plant: PlantRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller_file: Option<String>,
    pub h: f64,
    #[serde(rename = "T")]
    pub max_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<BoxRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_set: Option<BoxRecord>,
}

fn rows_to_matrix(rows: &[Vec<f64>], nrows: usize, field: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(nrows, 0));
    }
    let cols = rows[0].len();
    if rows.len() != nrows || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Parse {
            path: format!("plant.{field}"),
            message: format!("expected {nrows} rows of equal length"),
        });
    }
    Ok(DMatrix::from_row_iterator(nrows, cols, rows.iter().flatten().copied()))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl SystemFile {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::Parse { path: e.path().to_string(), message: e.inner().to_string() })
    }

    /// Builds the system; `base_dir` resolves a relative `controller_file`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<ClosedLoopSystem> {
        let n = self.dimension;
        let plant = match &self.plant {
            PlantRecord::Builtin(b) => Plant::Builtin(b.clone()),
            PlantRecord::Linear { a, b } => {
                Plant::Linear { a: rows_to_matrix(a, n, "a")?, b: rows_to_matrix(b, n, "b")? }
            }
            PlantRecord::Polynomial { control_dim, equations } => {
                Plant::Polynomial { state_dim: n, control_dim: *control_dim, equations: equations.clone() }
            }
        };
        if plant.state_dim() != n {
            return Err(Error::Parse {
                path: "dimension".into(),
                message: format!("plant has dimension {}, file says {n}", plant.state_dim()),
            });
        }
        let controller = match &self.controller_file {
            Some(f) => {
                let path = match base_dir {
                    Some(dir) => dir.join(f),
                    None => f.into(),
                };
                Some(NeuralController::from_json(&std::fs::read_to_string(&path)?)?)
            }
            None => None,
        };
        let mut sys = ClosedLoopSystem::new(self.name.clone(), plant, controller, self.h, self.max_steps)?;
        if let Some(d) = &self.domain {
            sys = sys.with_domain(Hyperbox::new(d.lo.clone(), d.hi.clone())?)?;
        }
        if let Some(t) = &self.initial_set {
            sys = sys.with_initial_set(Hyperbox::new(t.lo.clone(), t.hi.clone())?)?;
        }
        Ok(sys)
    }

    /// File record for a system; the controller (if any) must be written separately.
    pub fn from_system(sys: &ClosedLoopSystem, controller_file: Option<String>) -> Self {
        let plant = match &sys.plant {
            Plant::Builtin(b) => PlantRecord::Builtin(b.clone()),
            Plant::Linear { a, b } => PlantRecord::Linear { a: matrix_to_rows(a), b: matrix_to_rows(b) },
            Plant::Polynomial { control_dim, equations, .. } => {
                PlantRecord::Polynomial { control_dim: *control_dim, equations: equations.clone() }
            }
        };
        let boxed = |b: &Hyperbox| BoxRecord { lo: b.lo.clone(), hi: b.hi.clone() };
        Self {
            name: sys.name.clone(),
            dimension: sys.dim(),
            plant,
            controller_file,
            h: sys.step,
            max_steps: sys.max_steps,
            domain: sys.domain.as_ref().map(boxed),
            initial_set: sys.initial_set.as_ref().map(boxed),
        }
    }
}

impl ClosedLoopSystem {
    /// Loads a system specification file (and its controller file, if referenced).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        SystemFile::parse(&text)?.build(path.parent())
    }
}
