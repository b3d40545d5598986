mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nexg::approximator::SensitivityKind;
use nexg::explorer::DirectionPolicy;

/// Learned inverse-sensitivity exploration of closed-loop systems.
#[derive(Parser, Debug)]
#[command(name = "nexg", version)]
struct Cli {
    /// Catalog system name or path to a system JSON file.
    #[arg(long, global = true, default_value = "vanderpol")]
    system: String,

    /// Directory that receives every output file.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,

    /// Seed for every random choice; equal seeds give identical outputs.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory and write it as CSV.
    Simulate {
        /// Initial state; defaults to the centre of the initial set.
        #[arg(long, value_parser = parse_vector)]
        x0: Option<Point>,
        /// Number of integration steps; defaults to the system horizon.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Generate a sensitivity dataset from anchor/neighbour trajectory pairs.
    GenData {
        #[arg(long, default_value_t = 40)]
        anchors: usize,
        #[arg(long, default_value_t = 10)]
        neighbors: usize,
        #[arg(long, default_value_t = 0.01)]
        radius: f64,
        #[arg(long, default_value_t = 5)]
        subsample: usize,
        #[arg(long, value_enum, default_value_t = KindArg::Inverse)]
        kind: KindArg,
    },
    /// Train a directional approximator on a dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 25)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 512)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        batch: usize,
    },
    /// Score a model on a dataset, optionally estimating eps_abs(r).
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Also write the absolute-error curve over perturbation radii.
        #[arg(long)]
        error_curve: bool,
        /// Samples per radius for the error curve.
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Steer a trajectory to a target state at a given time.
    Reach {
        #[command(flatten)]
        guide: GuideArgs,
        #[arg(long, value_parser = parse_vector)]
        target: Point,
        #[arg(long)]
        time: f64,
        /// Anchor initial state; defaults to the centre of the initial set.
        #[arg(long, value_parser = parse_vector)]
        x0: Option<Point>,
        #[command(flatten)]
        rd: RdArgs,
        #[arg(long, value_enum, default_value_t = PolicyArg::Straight)]
        policy: PolicyArg,
    },
    /// Estimate how much of the reachable set at a time the search can hit.
    Coverage {
        #[command(flatten)]
        guide: GuideArgs,
        #[arg(long)]
        time: f64,
        #[arg(long, default_value_t = 200)]
        targets: usize,
        #[command(flatten)]
        rd: RdArgs,
    },
    /// Search for a trajectory that enters an unsafe box.
    Falsify {
        /// Safety specification JSON: unsafe box and time interval.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Rd)]
        method: MethodArg,
        #[command(flatten)]
        guide: GuideArgs,
        #[arg(long, default_value_t = 0.5)]
        s: f64,
        #[arg(long, default_value_t = 2)]
        p: usize,
        #[arg(long, default_value_t = 0.004)]
        delta: f64,
        /// Simulation budget (correction bound for the guided search).
        #[arg(long, default_value_t = 50)]
        budget: usize,
        /// Annealing temperature of the baseline.
        #[arg(long, default_value_t = 50.0)]
        beta: f64,
    },
    /// Predict a neighbouring trajectory from an anchor without simulating it.
    Predict {
        #[command(flatten)]
        guide: GuideArgs,
        #[arg(long, value_parser = parse_vector)]
        x0_new: Point,
        /// Anchor initial state; defaults to the centre of the initial set.
        #[arg(long, value_parser = parse_vector)]
        x0: Option<Point>,
        /// Forward dataset used to fit a linear magnitude model.
        #[arg(long)]
        magnitude_from: Option<PathBuf>,
    },
    /// Evaluate the convergence bound and the iteration estimate.
    Bounds {
        #[arg(long)]
        d_init: f64,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.0)]
        r_eps: f64,
        #[arg(long, default_value_t = 0.004)]
        delta: f64,
    },
}

#[derive(Args, Debug, Clone)]
#[group(multiple = false)]
struct GuideArgs {
    /// Trained model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Use exact simulation-based sensitivity instead of a model.
    #[arg(long)]
    oracle: bool,
}

#[derive(Args, Debug, Clone)]
struct RdArgs {
    /// Scaling factor applied to each progress step.
    #[arg(long, default_value_t = 0.5)]
    s: f64,
    /// Steps between re-simulations.
    #[arg(long, default_value_t = 2)]
    p: usize,
    /// Success radius around the target.
    #[arg(long, default_value_t = 0.004)]
    delta: f64,
    /// Maximum number of simulations.
    #[arg(long, default_value_t = 50)]
    bound: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum KindArg {
    Inverse,
    Forward,
}

impl From<KindArg> for SensitivityKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Inverse => SensitivityKind::Inverse,
            KindArg::Forward => SensitivityKind::Forward,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum PolicyArg {
    Straight,
    Axis,
}

impl From<PolicyArg> for DirectionPolicy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Straight => DirectionPolicy::StraightLine,
            PolicyArg::Axis => DirectionPolicy::AxisAligned,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum MethodArg {
    Rd,
    Baseline,
}

/// Comma-separated coordinates, e.g. `0.5,-1`.
#[derive(Debug, Clone)]
struct Point(Vec<f64>);

fn parse_vector(s: &str) -> Result<Point, String> {
    let v = s
        .split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("`{c}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err("components must be finite".into());
    }
    Ok(Point(v))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
