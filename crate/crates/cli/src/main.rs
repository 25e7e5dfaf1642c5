//! `adjscore`: fit GLMs by maximum likelihood and mean or median bias
//! reduction, run simulation studies, check for separation and compare
//! normal-model confidence intervals.
//!
//! Exit codes: 0 success, 1 input error, 2 a fit did not converge.

/// `print!` that ignores a closed stdout instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout().lock(), $($arg)*);
    }};
}

macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

mod commands;
mod input;
mod record;

use clap::{Args, Parser, Subcommand, ValueEnum};
use std::process::ExitCode;

/// An error carrying the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "adjscore", version, about = "Mean and median bias reduction for generalized linear models")]
struct Cli {
    /// Worker threads for simulations; all cores when unset.
    #[arg(long, global = true, env = "ADJSCORE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model with one or more estimation methods.
    Fit(FitArgs),
    /// Run a parametric simulation study.
    Simulate(SimulateArgs),
    /// Detect complete or quasi-complete separation in binomial data.
    CheckSeparation(SeparationArgs),
    /// Compare the normal-model intervals for (ν, α) pairs.
    CiCompare(CiArgs),
    /// List or print embedded datasets.
    Datasets(DatasetArgs),
    /// Fit a baseline-category multinomial model from wide count data.
    Multinomial(MultinomialArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetFormat {
    Table,
    Json,
    Csv,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// CSV file with a header row, or the name of an embedded dataset.
    #[arg(long)]
    pub data: String,
    /// Response column; proportions for the binomial family.
    #[arg(long)]
    pub response: Option<String>,
    /// Prior weights column; numbers of trials for the binomial family.
    #[arg(long)]
    pub weights: Option<String>,
    /// Covariate columns; all others when omitted.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Leave the intercept column out of the design.
    #[arg(long)]
    pub no_intercept: bool,
    /// gaussian, binomial, poisson or gamma.
    #[arg(long)]
    pub family: Option<String>,
    /// identity, log, logit, probit, cloglog, inverse or sqrt.
    #[arg(long)]
    pub link: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct ControlArgs {
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub max_step_halvings: Option<usize>,
    /// Starting value for the dispersion.
    #[arg(long)]
    pub phi_start: Option<f64>,
    /// phi or log_phi.
    #[arg(long)]
    pub dispersion_scale: Option<String>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub control: ControlArgs,
    /// ml, corrected_ml, mean_br, median_br, mixed_br; comma separated.
    #[arg(long, value_delimiter = ',', default_value = "ml")]
    pub method: Vec<String>,
    /// Level of the Wald intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Adjusted score test of `name=value` pairs, held jointly.
    #[arg(long = "test", value_name = "NAME=VALUE")]
    pub test: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Master seed; replicate r uses stream r of the ChaCha20 generator.
    #[arg(long, required = true)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    /// Estimators, comma separated: the fit methods and ml_moment_phi.
    #[arg(long, value_delimiter = ',', default_value = "ml,mean_br,median_br,mixed_br")]
    pub method: Vec<String>,
    /// True coefficients; the ML fit to the data when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Vec<f64>,
    /// True dispersion; the ML estimate when omitted.
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct SeparationArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct CiArgs {
    /// Residual degrees of freedom, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub nu: Vec<usize>,
    /// α values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    /// Evenly spaced α values as `start:stop:step`, stop included.
    #[arg(long)]
    pub alpha_grid: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct DatasetArgs {
    /// Dataset to print; lists the available names when omitted.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, value_enum, default_value_t = DatasetFormat::Table)]
    pub format: DatasetFormat,
}

#[derive(Args, Debug)]
pub struct MultinomialArgs {
    /// CSV file with one count column per category.
    #[arg(long)]
    pub data: String,
    /// Count columns, comma separated, in category order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub categories: Vec<String>,
    /// Covariate columns; all non-count columns when omitted.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    #[arg(long)]
    pub no_intercept: bool,
    /// Baseline category; the first when omitted.
    #[arg(long)]
    pub baseline: Option<String>,
    /// ml, mean_br, median_br, mixed_br; comma separated.
    #[arg(long, value_delimiter = ',', default_value = "ml")]
    pub method: Vec<String>,
    #[command(flatten)]
    pub control: ControlArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

fn configure_threads(threads: Option<usize>) -> Result<(), Failure> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(Failure::input("threads: must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::input(format!("threads: {e}")))
}

fn run(cli: Cli) -> Result<u8, Failure> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Fit(a) => commands::fit(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::CheckSeparation(a) => commands::check_separation(&a),
        Command::CiCompare(a) => commands::ci_compare(&a),
        Command::Datasets(a) => commands::datasets(&a),
        Command::Multinomial(a) => commands::multinomial(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
