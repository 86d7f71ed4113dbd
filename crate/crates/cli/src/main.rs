//! `ccap`: control capacities of multiplicative actuation channels from the
//! command line, with Monte Carlo and carry-free experiments.

#[cfg(test)]
mod cli_tests;
mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use control_capacity::Error as LibError;
use output::Format;

#[derive(Debug, Parser, Serialize)]
#[command(name = "ccap", version, about = "Control capacities of multiplicative actuation channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: Format,

    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads; the output does not depend on this.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Shannon, zero-error and second-moment capacities with their optimal gains.
    Capacity(CapacityArgs),
    /// η-th moment capacity along a grid of η.
    Curve(CurveArgs),
    /// Capacities against log2(mean/σ) for the Gaussian, uniform and erasure families.
    Sweep(SweepArgs),
    /// Capacity with side information about the gain.
    Sideinfo(SideinfoArgs),
    /// Monte Carlo run of the plant under one strategy.
    Simulate(SimulateArgs),
    /// Stability verdicts over a grid of plant gains at the capacity-achieving control.
    Scan(ScanArgs),
    /// Fraction of paths above M when log2 a exceeds the Shannon capacity.
    Converse(ConverseArgs),
    /// Degree traces of the carry-free model.
    Carryfree(CarryfreeArgs),
}

#[derive(Debug, Args)]
pub struct DistArgs {
    /// Gain law, e.g. uniform:1,3, gaussian:4,1, erasure:1,0.5, mixture:0.5*uniform:1,2|0.5*uniform:3,4.
    #[arg(value_name = "DIST", required_unless_present = "dist", allow_hyphen_values = true)]
    pub positional: Option<String>,

    #[arg(long = "dist", value_name = "SPEC", conflicts_with = "positional", allow_hyphen_values = true)]
    pub dist: Option<String>,
}

impl DistArgs {
    pub fn spec(&self) -> &str {
        self.dist.as_deref().or(self.positional.as_deref()).unwrap_or_default()
    }
}

impl Serialize for DistArgs {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.spec())
    }
}

#[derive(Debug, Args, Serialize)]
pub struct QueryArgs {
    /// Optimize d over [-H, H].
    #[arg(long, value_name = "H")]
    pub halfwidth: Option<f64>,

    /// Coarse grid size; odd, at least 101.
    #[arg(long, default_value_t = 2001)]
    pub grid_points: usize,

    #[arg(long, default_value_t = 1e-10)]
    pub refine_tol: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct CapacityArgs {
    #[command(flatten)]
    pub dist: DistArgs,

    /// Also report C_η at these η.
    #[arg(long, value_delimiter = ',')]
    pub eta: Vec<f64>,

    #[command(flatten)]
    #[serde(flatten)]
    pub query: QueryArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CurveArgs {
    #[command(flatten)]
    pub dist: DistArgs,

    /// Strictly increasing η grid; defaults to 20 log-spaced points from 1e-3 to 64.
    #[arg(long, value_delimiter = ',')]
    pub etas: Vec<f64>,

    #[command(flatten)]
    #[serde(flatten)]
    pub query: QueryArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, default_value_t = -3.0, allow_hyphen_values = true)]
    pub x_min: f64,

    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    pub x_max: f64,

    #[arg(long, default_value_t = 33)]
    pub points: usize,

    /// Restrict to these families (gaussian, uniform, erasure).
    #[arg(long, value_delimiter = ',')]
    pub family: Vec<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct SideinfoArgs {
    #[command(flatten)]
    pub dist: DistArgs,

    /// Report k = 0..=K bits of equal-width side information.
    #[arg(long, value_name = "K", conflicts_with = "si_cells")]
    pub si_bits: Option<u32>,

    /// Explicit partition edges lo,e1,...,hi.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub si_cells: Vec<f64>,

    /// Use the η-th moment sense instead of Shannon.
    #[arg(long)]
    pub eta: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct RunArgs {
    #[arg(long)]
    pub horizon: Option<usize>,

    #[arg(long)]
    pub paths: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    /// U = d·Y with d from --d, or the capacity-achieving gain.
    Linear,
    Zero,
    /// d redrawn every step uniformly from [2 d*, 0].
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub dist: DistArgs,

    #[arg(long, allow_hyphen_values = true)]
    pub a: f64,

    /// Control gain; defaults to the maximizer for the chosen sense.
    #[arg(long, allow_hyphen_values = true)]
    pub d: Option<f64>,

    #[arg(long, value_enum, default_value = "linear")]
    pub strategy: StrategyKind,

    /// Moments E|X|^η to track; defaults to η = 2.
    #[arg(long, value_delimiter = ',')]
    pub etas: Vec<f64>,

    /// Pick the default gain for the η-th moment sense instead of Shannon.
    #[arg(long)]
    pub eta: Option<f64>,

    #[arg(long = "threshold-M", default_value_t = 1e6)]
    pub threshold_m: f64,

    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub x0: f64,

    /// Process noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    pub w_std: f64,

    /// Observation noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    pub v_std: f64,

    /// Decide whether the η-th moment stays bounded under the additive noise.
    #[arg(long)]
    pub noise_check: bool,

    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ScanArgs {
    #[command(flatten)]
    pub dist: DistArgs,

    /// Plant gains; defaults to 21 points with log2 a within ±0.5 of the capacity.
    #[arg(long, value_delimiter = ',')]
    pub a_grid: Vec<f64>,

    /// Scan the η-th moment sense instead of Shannon.
    #[arg(long)]
    pub eta: Option<f64>,

    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct ConverseArgs {
    #[command(flatten)]
    pub dist: DistArgs,

    /// Plant gain; defaults to 2^(C_sh + 0.5).
    #[arg(long)]
    pub a: Option<f64>,

    #[arg(long = "threshold-M", value_delimiter = ',', default_value = "1e6")]
    pub threshold_m: Vec<f64>,

    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CarryfreeArgs {
    /// Gain spec cf:g_det,g_ran[,known=l1;l2][,fixed=l:v;...][,det=bits].
    #[arg(long, allow_hyphen_values = true)]
    pub gain: String,

    /// Plant gain z^{g_a}.
    #[arg(long, allow_hyphen_values = true)]
    pub g_a: i64,

    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub initial_degree: i64,

    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lib(#[from] LibError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Lib(e) => match e {
                LibError::NonIntegrable { .. } | LibError::InvariantViolated(_) | LibError::ZeroState => 3,
                _ => 2,
            },
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
