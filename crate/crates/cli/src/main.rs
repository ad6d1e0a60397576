//! Command-line front end: sampling, enumeration, exact probabilities, rate
//! evaluation and Monte Carlo validation runs.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "nbhd-ldp",
    version,
    about = "Large deviations of colored sparse random graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one graph, allocation or coupled pair.
    Sample(SampleArgs),
    /// Empirical measures of a sampled graph or allocation file.
    Measures(MeasuresArgs),
    /// List the type class with exact probabilities.
    Enumerate(EnumerateArgs),
    /// Exact type probabilities, optionally checked against brute force.
    ExactProb(ExactProbArgs),
    /// Evaluate a rate function.
    Rate(RateArgs),
    /// Solve for λ(x, c).
    Root(RootArgs),
    /// Monte Carlo decay rate of the isolated-vertex proportion.
    ValidateLdp(ValidateLdpArgs),
    /// Monte Carlo probe of the coupling distance.
    ValidateCoupling(ValidateCouplingArgs),
}

/// Targets: `--c C` (one color, m_n = round(nC/2) edges), `--colors 1 --pi P`,
/// or `--nu FILE --pi FILE`.
#[derive(Args, Serialize, Clone, Debug)]
pub struct TargetArgs {
    /// Mean degree of the single-color model.
    #[arg(long)]
    pub c: Option<f64>,
    /// Number of colors; only `1` is accepted together with a numeric `--pi`.
    #[arg(long)]
    pub colors: Option<usize>,
    /// Symbol measure JSON file.
    #[arg(long)]
    pub nu: Option<PathBuf>,
    /// Pair measure JSON file, or a number when `--colors 1`.
    #[arg(long)]
    pub pi: Option<String>,
}

#[derive(Args, Serialize, Debug)]
#[command(group(ArgGroup::new("model").required(true).args(["conditional", "allocation", "coupled", "bernoulli"])))]
pub struct SampleArgs {
    #[arg(long)]
    pub n: u64,
    #[command(flatten)]
    pub targets: TargetArgs,
    #[arg(long)]
    pub conditional: bool,
    #[arg(long)]
    pub allocation: bool,
    #[arg(long)]
    pub coupled: bool,
    #[arg(long)]
    pub bernoulli: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
pub struct MeasuresArgs {
    /// Graph or allocation JSON as written by `sample`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
pub struct EnumerateArgs {
    #[arg(long)]
    pub n: u64,
    #[command(flatten)]
    pub targets: TargetArgs,
    /// Largest total number of balls accepted.
    #[arg(long, default_value_t = nbhd_ldp::types::DEFAULT_MAX_BALLS)]
    pub budget: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
pub struct ExactProbArgs {
    #[arg(long)]
    pub n: u64,
    #[command(flatten)]
    pub targets: TargetArgs,
    /// Only this type (empirical neighbourhood JSON).
    #[arg(long)]
    pub measure: Option<PathBuf>,
    /// Also walk every allocation and compare.
    #[arg(long)]
    pub oracle: bool,
    /// Largest total number of balls accepted by the enumeration.
    #[arg(long, default_value_t = nbhd_ldp::types::DEFAULT_MAX_BALLS)]
    pub budget: u64,
    /// Largest number of allocations walked by `--oracle`.
    #[arg(long, default_value_t = nbhd_ldp::types::DEFAULT_MAX_ALLOCATIONS)]
    pub max_allocations: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
#[command(group(ArgGroup::new("kind").required(true).args(["isolated", "degree", "neighbourhood"])))]
pub struct RateArgs {
    /// η(x) for the isolated-vertex proportion.
    #[arg(long)]
    pub isolated: bool,
    /// δ(d) for a degree measure JSON file.
    #[arg(long)]
    pub degree: Option<PathBuf>,
    /// J(μ) for a neighbourhood measure JSON file.
    #[arg(long)]
    pub neighbourhood: Option<PathBuf>,
    #[arg(long)]
    pub x: Option<f64>,
    #[command(flatten)]
    pub targets: TargetArgs,
    /// `a:b:step` grid of x values; emits CSV.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
pub struct RootArgs {
    #[arg(long)]
    pub x: f64,
    #[arg(long)]
    pub c: f64,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Conditional,
    Allocation,
    Coupled,
    Bernoulli,
}

#[derive(Args, Serialize, Debug)]
pub struct ValidateLdpArgs {
    #[command(flatten)]
    pub targets: TargetArgs,
    #[arg(long, value_enum, default_value_t = ModelArg::Conditional)]
    pub model: ModelArg,
    /// Event threshold: isolated proportion at least x.
    #[arg(long)]
    pub x: f64,
    /// Comma-separated, strictly increasing sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_grid: Vec<u64>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run on one thread.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
pub struct ValidateCouplingArgs {
    #[command(flatten)]
    pub targets: TargetArgs,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_grid: Vec<u64>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use nbhd_ldp::Error;
    match err.downcast_ref::<Error>() {
        Some(Error::Io(_) | Error::Json(_) | Error::Csv(_)) | None => 1,
        Some(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Sample(a) => commands::sample(a),
        Command::Measures(a) => commands::measures(a),
        Command::Enumerate(a) => commands::enumerate(a),
        Command::ExactProb(a) => commands::exact_prob(a),
        Command::Rate(a) => commands::rate(a),
        Command::Root(a) => commands::root(a),
        Command::ValidateLdp(a) => commands::validate_ldp(a),
        Command::ValidateCoupling(a) => commands::validate_coupling(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
