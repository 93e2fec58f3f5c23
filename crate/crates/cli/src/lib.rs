//! `cesp` command-line driver.
//!
//! Every subcommand resolves its settings as flags > `--config` file >
//! defaults, writes its artifacts into `--out` and drops a `manifest.json`
//! next to them. Passing that manifest back as `--config` replays the run.

mod commands;
mod manifest;
pub mod settings;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use cesp_core::basin::{DEFAULT_BUDGET, DEFAULT_MATCH_RADIUS};

pub use manifest::RunManifest;
use settings::Settings;

pub mod exit {
    pub const OK: i32 = 0;
    pub const MISMATCH: i32 = 1;
    pub const MAX_ITERS: i32 = 2;
    pub const DIVERGED: i32 = 3;
    pub const USAGE: i32 = 64;
    pub const UNKNOWN_PROBLEM: i32 = 65;
    pub const IO: i32 = 74;
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    UnknownProblem(String),
    Io(String, std::io::Error),
    Core(cesp_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(_) => exit::USAGE,
            CliError::UnknownProblem(_) => exit::UNKNOWN_PROBLEM,
            CliError::Io(..) => exit::IO,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::UnknownProblem(p) => {
                write!(f, "unknown problem '{p}' (expected one of: toy, quad, robust-mlp)")
            }
            CliError::Io(path, e) => write!(f, "{path}: {e}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cesp_core::Error> for CliError {
    fn from(e: cesp_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "cesp",
    version,
    about = "Saddle-point dynamics: trajectories, stability checks, scans and basins"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one trajectory and write trajectory.csv.
    Trajectory(TrajectoryArgs),
    /// Classify a point and print the report as JSON.
    Classify(ClassifyArgs),
    /// Compare CESP/GDA fixed points with locally optimal saddles over a grid.
    Scan(ScanArgs),
    /// Label grid cells by the attractor their trajectory ends at.
    Basin(BasinArgs),
    /// Paired GDA/CESP runs on the robust MLP problem across seeds.
    Robust(RobustArgs),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// toy, quad or robust-mlp.
    #[arg(long)]
    problem: Option<String>,
    /// gda, cesp, adagrad or adagrad-cesp.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// dense or power.
    #[arg(long)]
    curvature: Option<String>,
    /// Output directory (default: current directory).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Flat key=value file, or a manifest.json from an earlier run.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Any other setting, e.g. `--set rho-x=1` or `--set a="2,0;0,1"`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct TrajectoryArgs {
    #[command(flatten)]
    common: Common,
    /// Start point as comma-separated x coordinates followed by y coordinates.
    #[arg(long, allow_hyphen_values = true)]
    start: Option<String>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    point: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
    /// Exit 1 unless the verdict equals this.
    #[arg(long)]
    expect: Option<String>,
}

#[derive(Args, Debug)]
struct ScanArgs {
    #[command(flatten)]
    common: Common,
    /// `lo:hi:n` square grid, or `xlo:xhi:nx:ylo:yhi:ny`.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct BasinArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long)]
    match_radius: Option<f64>,
    /// Semicolon-separated `x,y` points; defaults to the toy critical points.
    #[arg(long, allow_hyphen_values = true)]
    attractors: Option<String>,
}

#[derive(Args, Debug)]
struct RobustArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    init_scale: Option<f64>,
}

pub(crate) const DEFAULT_GRID: &str = "-4:4:161";
pub(crate) const DEFAULT_BASIN_BUDGET: usize = DEFAULT_BUDGET;
pub(crate) const DEFAULT_RADIUS: f64 = DEFAULT_MATCH_RADIUS;

fn layer(common: &Common, extra: &[(&str, Option<String>)]) -> Result<Settings, CliError> {
    let mut s = match &common.config {
        Some(path) => Settings::from_config(path)?,
        None => Settings::default(),
    };
    s.set_opt("problem", common.problem.clone());
    s.set_opt("method", common.method.clone());
    s.set_opt("eta", common.eta);
    s.set_opt("max-iters", common.max_iters);
    s.set_opt("grad-tol", common.grad_tol);
    s.set_opt("noise-sigma", common.noise_sigma);
    s.set_opt("seed", common.seed);
    s.set_opt("curvature", common.curvature.clone());
    s.set_opt("out", common.out.as_ref().map(|p| p.display().to_string()));
    for (k, v) in extra {
        s.set_opt(k, v.clone());
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        s.set(k, v);
    }
    Ok(s)
}

fn dispatch(cli: Cli, argv: Vec<String>) -> Result<i32, CliError> {
    let f = |v: Option<f64>| v.map(|x| x.to_string());
    match cli.command {
        Command::Trajectory(a) => {
            let s = layer(&a.common, &[("start", a.start)])?;
            commands::trajectory(&s, argv)
        }
        Command::Classify(a) => {
            let s = layer(
                &a.common,
                &[("point", a.point), ("tol", f(a.tol)), ("expect", a.expect)],
            )?;
            commands::classify(&s, argv)
        }
        Command::Scan(a) => {
            let s = layer(&a.common, &[("grid", a.grid), ("tol", f(a.tol))])?;
            commands::scan(&s, argv)
        }
        Command::Basin(a) => {
            let s = layer(
                &a.common,
                &[
                    ("grid", a.grid),
                    ("match-radius", f(a.match_radius)),
                    ("attractors", a.attractors),
                ],
            )?;
            commands::basin(&s, argv)
        }
        Command::Robust(a) => {
            let s = layer(
                &a.common,
                &[
                    ("seeds", a.seeds.map(|n| n.to_string())),
                    ("init-scale", f(a.init_scale)),
                ],
            )?;
            commands::robust(&s, argv)
        }
    }
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    match dispatch(cli, argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
