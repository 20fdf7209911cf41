//! `stslr` command-line tool: evaluate the space-time covariance model,
//! estimate empirical variograms, fit parameters, remove trends, simulate
//! synthetic data and run the numerical self-checks.
//!
//! Every command writes its artifacts and a `manifest.json` into `--out`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod manifest;

/// Exit code for a validation run that completed but did not pass.
const EXIT_VALIDATION_FAILED: u8 = 3;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "stslr", version, about = "Non-separable space-time covariance toolkit")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// JSON file with option overrides; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tabulate covariance and variogram on a (h, u) grid.
    Eval(EvalArgs),
    /// Empirical temporal and spatial variograms of a data file.
    Empirical(EmpiricalArgs),
    /// Fit model parameters to a pair of empirical variograms.
    Fit(FitArgs),
    /// Fit and remove the quadratic spatial trend.
    Detrend(DetrendArgs),
    /// Draw Gaussian realizations on a random station design.
    Simulate(SimulateArgs),
    /// Run the numerical cross-checks and write a report.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub params: PathBuf,
    /// Largest normalized spatial lag.
    #[arg(long)]
    pub h_max: f64,
    /// Number of spatial lags, starting at 0.
    #[arg(long)]
    pub h_steps: usize,
    #[arg(long)]
    pub u_max: f64,
    #[arg(long)]
    pub u_steps: usize,
    /// Leave the nugget out of the variogram column.
    #[arg(long)]
    pub no_nugget: bool,
}

#[derive(Args, Debug, Default)]
pub struct DataArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Metadata sidecar; defaults to `<data>.meta.json` when present.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub projection: Option<ProjectionArg>,
    /// Degrees; defaults to the mean station latitude.
    #[arg(long, allow_hyphen_values = true)]
    pub reference_latitude: Option<f64>,
    /// Coordinate divisor, e.g. 10000 to work in units of 10 km.
    #[arg(long)]
    pub divisor: Option<f64>,
    #[arg(long)]
    pub delta_t: Option<f64>,
    /// Multiply every value by this factor on load.
    #[arg(long, allow_hyphen_values = true)]
    pub rescale: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProjectionArg {
    None,
    LocalEquirectangular,
}

#[derive(Args, Debug)]
pub struct EmpiricalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub max_lag_fraction: Option<f64>,
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub min_pairs: Option<usize>,
    /// Weight pairs in a bin by their number of joint observations.
    #[arg(long)]
    pub pair_weighted: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Uniform,
    PairCount,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum NuggetArg {
    Free,
    Zero,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub temporal: Option<PathBuf>,
    #[arg(long)]
    pub spatial: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub weighting: Option<WeightingArg>,
    #[arg(long, value_enum)]
    pub nugget: Option<NuggetArg>,
    /// Hold lambda at this value (the default gauge, 1.0).
    #[arg(long, conflicts_with = "gauge_xi")]
    pub gauge_lambda: Option<f64>,
    /// Hold xi at this value instead of lambda.
    #[arg(long)]
    pub gauge_xi: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DetrendArgs {
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub stations: usize,
    #[arg(long)]
    pub times: usize,
    /// Stations are uniform on [0, extent]^2.
    #[arg(long)]
    pub extent: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta_t: f64,
    #[arg(long, default_value_t = 1)]
    pub realizations: usize,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub psd_designs: Option<usize>,
    #[arg(long)]
    pub psd_points: Option<usize>,
    #[arg(long)]
    pub max_subdivisions: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(commands::Outcome::Done) => ExitCode::SUCCESS,
        Ok(commands::Outcome::ValidationFailed) => {
            eprintln!("validation failed; see report.json");
            ExitCode::from(EXIT_VALIDATION_FAILED)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<commands::UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
