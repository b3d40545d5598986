use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nexg::approximator::{
    evaluate, load_model, save_model, train, ExactInverse, MlpModel, OracleDirection, SensitivityKind, TrainConfig,
};
use nexg::dataset::{generate_dataset, GenerationConfig, SensitivityDataset};
use nexg::dynamics::{catalog, ClosedLoopSystem};
use nexg::explorer::{
    convergence_bound, coverage, k_star, predict_trajectory, reach_destination, ConvergenceParams, Guide,
    MagnitudeModel, RDParams, TemplateSet,
};
use nexg::falsification::{falsify_baseline, falsify_rd, SafetySpec};
use nexg::sensitivity::{abs_error_curve, DEFAULT_RADII};
use nexg::{Hyperbox, State};
use serde_json::json;

use crate::{Cli, Command, GuideArgs, MethodArg, Point, RdArgs};

#[derive(Debug)]
pub enum CliError {
    /// Arguments are individually valid but do not combine.
    Usage(String),
    Core(nexg::Error),
    /// The approximator stopped producing usable directions mid-search.
    Aborted(String),
    /// The search ran out of corrections or simulations without succeeding.
    Exhausted(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(
                nexg::Error::Divergence { .. }
                | nexg::Error::TrainingDiverged { .. }
                | nexg::Error::DegeneratePrediction { .. },
            )
            | CliError::Aborted(_) => 3,
            CliError::Core(_) => 2,
            CliError::Exhausted(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Aborted(m) | CliError::Exhausted(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<nexg::Error> for CliError {
    fn from(e: nexg::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn input(msg: impl Into<String>) -> CliError {
    CliError::Core(nexg::Error::Input(msg.into()))
}

fn load_system(spec: &str) -> Result<ClosedLoopSystem> {
    if let Some(sys) = catalog::by_name(spec) {
        return Ok(sys);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(input(format!(
            "`{spec}` is neither a catalog system ({}) nor an existing file",
            catalog::NAMES.join(", ")
        )));
    }
    Ok(ClosedLoopSystem::from_file(path)?)
}

fn initial_set(sys: &ClosedLoopSystem) -> Result<Hyperbox> {
    sys.initial_set.clone().ok_or_else(|| input(format!("system `{}` declares no initial set", sys.name)))
}

fn state(p: &Point, sys: &ClosedLoopSystem, what: &str) -> Result<State> {
    if p.0.len() != sys.dim() {
        return Err(input(format!("{what} has {} components, system dimension is {}", p.0.len(), sys.dim())));
    }
    Ok(State::from_column_slice(&p.0))
}

fn anchor_start(x0: Option<&Point>, sys: &ClosedLoopSystem) -> Result<State> {
    match x0 {
        Some(p) => state(p, sys, "--x0"),
        None => Ok(initial_set(sys)?.center()),
    }
}

fn rd_params(rd: &RdArgs) -> RDParams {
    RDParams::new(rd.s, rd.p, rd.delta, rd.bound)
}

/// Either a trained model or the exact oracle.
enum Source {
    Model(MlpModel),
    Oracle,
}

fn guide_source(g: &GuideArgs, sys: &ClosedLoopSystem, kind: SensitivityKind) -> Result<Source> {
    match (&g.model, g.oracle) {
        (Some(path), false) => {
            let model = load_model(path)?;
            if model.kind != kind {
                return Err(input(format!("model has kind {}, this command needs {kind}", model.kind)));
            }
            if model.state_dim != sys.dim() {
                return Err(input("model state dimension differs from the system"));
            }
            if model.system_name != sys.name {
                log::warn!("model was trained on `{}`, running on `{}`", model.system_name, sys.name);
            }
            Ok(Source::Model(model))
        }
        (None, true) => Ok(Source::Oracle),
        _ => Err(CliError::Usage("exactly one of --model or --oracle is required".into())),
    }
}

fn guide<'a>(src: &'a Source, exact: &'a ExactInverse<'a>) -> Guide<'a> {
    match src {
        Source::Model(m) => Guide::Directional(m),
        Source::Oracle => Guide::Vector(exact),
    }
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn text(&self, name: &str, body: &str) -> Result<()> {
        let mut body = body.to_string();
        if !body.ends_with('\n') {
            body.push('\n');
        }
        fs::write(self.path(name), body)?;
        Ok(())
    }

    fn create(&self, name: &str) -> Result<fs::File> {
        Ok(fs::File::create(self.path(name))?)
    }
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

pub fn run(cli: Cli) -> Result<()> {
    let out = Output::new(cli.output_dir)?;
    let seed = cli.seed;
    if let Command::Bounds { d_init, s, p, gamma, r_eps, delta } = cli.command {
        return bounds(&out, d_init, s, p, gamma, r_eps, delta);
    }
    let sys = load_system(&cli.system)?;
    match cli.command {
        Command::Simulate { x0, steps } => {
            let x0 = anchor_start(x0.as_ref(), &sys)?;
            let traj = sys.simulate(&x0, steps.unwrap_or(sys.max_steps))?;
            traj.write_csv(out.create("trajectory.csv")?)?;
            println!("{} samples -> {}", traj.samples().len(), out.path("trajectory.csv").display());
        }
        Command::GenData { anchors, neighbors, radius, subsample, kind } => {
            let config = GenerationConfig {
                num_anchors: anchors,
                num_neighbors: neighbors,
                neighbor_radius: radius,
                time_subsample: subsample,
                kind: kind.into(),
                seed,
                theta: initial_set(&sys)?,
                max_steps: sys.max_steps,
                skipped: 0,
            };
            let ds = generate_dataset(&sys, &config)?;
            ds.save(&out.path("dataset.csv"))?;
            println!("{} tuples ({} skipped) -> {}", ds.len(), ds.config.skipped, out.path("dataset.csv").display());
        }
        Command::Train { dataset, epochs, lr, width, batch } => {
            let ds = SensitivityDataset::load(&dataset)?;
            let config = TrainConfig {
                learning_rate: lr,
                epochs,
                hidden_width: width,
                batch_size: batch,
                seed,
                ..TrainConfig::default()
            };
            let (model, report) = train(&ds, &config)?;
            save_model(&model, &out.path("model.json"))?;
            out.text("training_report.json", &serde_json::to_string_pretty(&report.without_timing()).expect("report"))?;
            out.text("timing.json", &pretty(&json!({ "wall_time_secs": report.wall_time_secs })))?;
            println!("held-out MRE {:.3}% MSE {:.3e}", report.mre_percent, report.mse);
        }
        Command::Eval { model, dataset, error_curve, samples } => {
            let model = load_model(&model)?;
            let ds = SensitivityDataset::load(&dataset)?;
            if ds.kind() != model.kind || ds.dim() != model.state_dim {
                return Err(input("dataset kind or dimension does not match the model"));
            }
            let (mse, mre) = evaluate(&model, &ds.tuples);
            let body = json!({ "tuples": ds.len(), "mse": mse, "mre_percent": mre });
            out.text("eval.json", &pretty(&body))?;
            println!("MSE {mse:.3e} MRE {mre:.3}%");
            if error_curve {
                let curve = abs_error_curve(&model, &sys, &initial_set(&sys)?, &DEFAULT_RADII, samples, seed)?;
                curve.write_csv(out.create("error_curve.csv")?)?;
            }
        }
        Command::Reach { guide: g, target, time, x0, rd, policy } => {
            let src = guide_source(&g, &sys, SensitivityKind::Inverse)?;
            let exact = ExactInverse::new(&sys);
            let theta = initial_set(&sys)?;
            let z = state(&target, &sys, "--target")?;
            let anchor = sys.simulate_full(&anchor_start(x0.as_ref(), &sys)?)?;
            let params = rd_params(&rd).with_policy(policy.into());
            let res = reach_destination(&sys, guide(&src, &exact), &anchor, &z, time, &theta, &params)?;
            out.text("reach.json", &res.to_json(params.delta))?;
            res.write_iterations_csv(out.create("reach_iterations.csv")?)?;
            res.final_trajectory.write_csv(out.create("reach_trajectory.csv")?)?;
            println!("k = {} d_a = {:e} d_r = {:e}", res.k, res.d_a, res.d_r);
            if let Some(msg) = &res.aborted {
                return Err(CliError::Aborted(format!("search aborted: {msg}")));
            }
            if !res.reached(params.delta) {
                return Err(CliError::Exhausted(format!("target not reached within {} corrections", params.bound)));
            }
        }
        Command::Coverage { guide: g, time, targets, rd } => {
            let src = guide_source(&g, &sys, SensitivityKind::Inverse)?;
            let exact = ExactInverse::new(&sys);
            let theta = initial_set(&sys)?;
            let templates = TemplateSet::axes(sys.dim());
            let report = coverage(&sys, guide(&src, &exact), &theta, time, targets, &rd_params(&rd), &templates, seed)?;
            out.text("coverage.json", &report.to_json())?;
            report.write_targets_csv(out.create("coverage_targets.csv")?)?;
            report.write_polygon_csv(out.create("coverage_polygon.csv")?)?;
            println!("coverage {:.3}", report.coverage_fraction);
        }
        Command::Falsify { spec, method, guide: g, s, p, delta, budget, beta } => {
            let spec = SafetySpec::from_file(&spec)?;
            let theta = initial_set(&sys)?;
            let res = match method {
                MethodArg::Rd => {
                    let src = guide_source(&g, &sys, SensitivityKind::Inverse)?;
                    let exact = ExactInverse::new(&sys);
                    let params = RDParams::new(s, p, delta, budget);
                    falsify_rd(&sys, guide(&src, &exact), &theta, &spec, &params, seed)?
                }
                MethodArg::Baseline => falsify_baseline(&sys, &theta, &spec, budget, beta, seed)?,
            };
            out.text("falsification.json", &res.to_json())?;
            res.trajectory.write_csv(out.create("falsification_trajectory.csv")?)?;
            write_corners(&out, "unsafe_corners.csv", &spec.unsafe_box)?;
            println!("falsified = {} k = {} rho = {:e}", res.falsified, res.k, res.rho);
            if !res.falsified {
                return Err(CliError::Exhausted(format!("no falsifying trajectory within budget {budget}")));
            }
        }
        Command::Predict { guide: g, x0_new, x0, magnitude_from } => {
            let anchor = sys.simulate_full(&anchor_start(x0.as_ref(), &sys)?)?;
            let x_new = state(&x0_new, &sys, "--x0-new")?;
            let magnitude = match magnitude_from {
                Some(path) => MagnitudeModel::fit(&SensitivityDataset::load(&path)?.tuples)?,
                None => MagnitudeModel::Unit,
            };
            let pred = match guide_source(&g, &sys, SensitivityKind::Forward)? {
                Source::Model(m) => predict_trajectory(&m, &anchor, &x_new, &magnitude)?,
                Source::Oracle => {
                    let oracle = OracleDirection::new(sys.clone(), SensitivityKind::Forward);
                    predict_trajectory(&oracle, &anchor, &x_new, &magnitude)?
                }
            };
            pred.write_csv(out.create("predicted.csv")?)?;
            anchor.write_csv(out.create("anchor.csv")?)?;
            println!("{} predicted samples -> {}", pred.samples().len(), out.path("predicted.csv").display());
        }
        Command::Bounds { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn bounds(out: &Output, d_init: f64, s: f64, p: usize, gamma: f64, r_eps: f64, delta: f64) -> Result<()> {
    if d_init.is_nan() || d_init <= 0.0 {
        return Err(input("--d-init must be positive"));
    }
    let cp = ConvergenceParams::from_gamma(gamma, r_eps)?;
    let ideal = k_star(d_init, delta, s, p, &ConvergenceParams::exact())?;
    let k = k_star(d_init, delta, s, p, &cp)?;
    let curve = (0..=k)
        .map(|i| convergence_bound(d_init, s, p, &cp, i).map(|b| json!({ "k": i, "bound": b })))
        .collect::<nexg::Result<Vec<_>>>()?;
    let body = json!({
        "d_init": d_init,
        "s": s,
        "p": p,
        "gamma": gamma,
        "r_eps": r_eps,
        "delta": delta,
        "contraction": 1.0 - s * p as f64 * gamma,
        "floor": r_eps / s,
        "k_ideal": ideal,
        "k_star": k,
        "bound_curve": curve,
    });
    out.text("bounds.json", &pretty(&body))?;
    println!("k_ideal = {ideal} k_star = {k}");
    Ok(())
}

/// CSV of the box corners, for plotting.
fn write_corners(out: &Output, name: &str, b: &Hyperbox) -> Result<()> {
    let mut body = (1..=b.dim()).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    body.push('\n');
    for c in b.corners() {
        body.push_str(&c.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
        body.push('\n');
    }
    out.text(name, &body)
}
