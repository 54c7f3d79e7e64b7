//! `pplr`: fit, test and simulate partially penalized GLMs from the command line.
//!
//! Exit status: 0 on success, 2 for invalid input or arguments, 3 when a fit
//! failed to converge (outputs are still written where possible), 1 for I/O
//! failures.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_240_607;

#[derive(Debug, Parser)]
#[command(
    name = "pplr",
    version,
    about = "Partial penalized likelihood ratio tests for sparse GLMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a (partially) penalized model and write its coefficients.
    Fit(ModelArgs),
    /// Test that the named coefficients are zero.
    Test(TestArgs),
    /// Fit the whole regularization path and report BIC along it.
    Path(ModelArgs),
    /// Run the Monte Carlo study for one design and a list of deltas.
    Simulate(SimulateArgs),
    /// Reproduce the prostate cancer analysis on the bundled data.
    Prostate(ProstateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScalingArg {
    /// Centered columns with sum of squares n.
    N,
    /// Centered columns with unit sample variance.
    Sample,
    /// Use the columns as given.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BicArg {
    /// Gaussian scale profiled out: n log(RSS/n).
    Profile,
    /// Log-likelihood with unit error variance.
    Loglik,
    /// Penalized objective including the penalty.
    Objective,
}

impl From<BicArg> for pplr::BicFit {
    fn from(b: BicArg) -> Self {
        match b {
            BicArg::Profile => pplr::BicFit::ProfileLikelihood,
            BicArg::Loglik => pplr::BicFit::LogLikelihood,
            BicArg::Objective => pplr::BicFit::PenalizedObjective,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Directory receiving the output files (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also print the main result to standard output in this format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column.
    #[arg(long)]
    pub response: String,
    /// Predictor columns (default: every other column, in file order).
    #[arg(long, value_delimiter = ',')]
    pub predictors: Vec<String>,
    #[arg(long, default_value = "gaussian")]
    pub family: String,
    /// scad, mcp, lasso or none.
    #[arg(long, default_value = "scad")]
    pub penalty: String,
    /// Shape parameter of SCAD/MCP (default 3.7 / 3).
    #[arg(long)]
    pub shape: Option<f64>,
    /// Coefficients left out of the penalty.
    #[arg(long, value_delimiter = ',')]
    pub unpenalized: Vec<String>,
    /// Fixed tuning parameter (otherwise chosen by BIC).
    #[arg(long, conflicts_with = "tune")]
    pub lambda: Option<f64>,
    /// Tuning rule when --lambda is absent.
    #[arg(long, value_parser = ["bic"])]
    pub tune: Option<String>,
    /// Goodness-of-fit term of the BIC.
    #[arg(long, value_enum, default_value = "profile")]
    pub bic: BicArg,
    /// Column standardization applied before fitting.
    #[arg(long, value_enum, default_value = "n")]
    pub scaling: ScalingArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Coefficients set to zero under the null hypothesis.
    #[arg(long, value_delimiter = ',', required = true)]
    pub test: Vec<String>,
    /// pplr, plr or olr.
    #[arg(long, default_value = "pplr")]
    pub method: String,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// 1 (linear) or 2 (logistic).
    #[arg(long, default_value = "1")]
    pub example: String,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 11)]
    pub p: usize,
    /// Local alternative sizes; beta_1 = delta / sqrt(n).
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub delta: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Tests to run (pplr, plr, olr).
    #[arg(long, value_delimiter = ',', default_value = "pplr,plr,olr")]
    pub methods: Vec<String>,
    #[arg(long, default_value = "scad")]
    pub penalty: String,
    #[arg(long, value_enum, default_value = "profile")]
    pub bic: BicArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ProstateArgs {
    #[arg(long, default_value = "scad")]
    pub penalty: String,
    #[arg(long, value_enum, default_value = "profile")]
    pub bic: BicArg,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Test(a) => commands::test(a),
        Command::Path(a) => commands::path(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Prostate(a) => commands::prostate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pplr: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
