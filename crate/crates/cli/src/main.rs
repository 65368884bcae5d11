//! `chanfsl`: episodic evaluation, k-sweeps, MMC reports, theory checks,
//! transform tables and synthetic data generation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use chanfsl_core::transforms::DEFAULT_K;
use chanfsl_core::oracle::DEFAULT_ALPHA;

#[derive(Parser, Debug)]
#[command(name = "chanfsl", version, about = "Channel-wise feature transforms for few-shot classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a transform and classifier over sampled episodes.
    Evaluate(EvaluateArgs),
    /// Evaluate the simple transform for a list of k values.
    SweepK(SweepArgs),
    /// Per-channel MMC scatter data and MMC distance table.
    MmcReport(MmcReportArgs),
    /// Run the numerical theory checks.
    VerifyTheory(VerifyArgs),
    /// Tabulate transforms over a grid of inputs.
    TransformTable(TableArgs),
    /// Generate a synthetic Gaussian feature dataset.
    SynthGen(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TransformKind {
    None,
    Simple,
    Extended,
    Power,
    Log,
    Piecewise,
    Offset,
    Oracle,
}

#[derive(Args, Debug, Clone)]
struct TransformArgs {
    /// Feature transform applied to support and query features.
    #[arg(long, value_enum, default_value_t = TransformKind::Simple)]
    transform: TransformKind,
    /// Exponent of the simple, extended, power, piecewise and offset transforms.
    #[arg(long, default_value_t = DEFAULT_K)]
    k: f64,
    /// Slope at zero of the log transform.
    #[arg(long)]
    a: Option<f64>,
    /// Switch point of the piecewise transform.
    #[arg(long)]
    lambda0: Option<f64>,
    /// Peak of the piecewise transform's quadratic branch.
    #[arg(long)]
    x0: Option<f64>,
    /// Constant added by the offset transform.
    #[arg(long)]
    r: Option<f64>,
    /// Oracle cap on the ratio of oracle to original MMC.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Classifier {
    Ncc,
    Lc,
}

#[derive(Args, Debug, Clone)]
struct EpisodeArgs {
    #[arg(long, default_value_t = 5)]
    n_way: usize,
    #[arg(long, default_value_t = 5)]
    k_shot: usize,
    #[arg(long, default_value_t = 15)]
    m_query: usize,
    #[arg(long, default_value_t = 10_000)]
    episodes: usize,
    #[arg(long, value_enum, default_value_t = Classifier::Ncc)]
    classifier: Classifier,
    /// Linear classifier penalty, divided by the number of support samples.
    #[arg(long, default_value_t = 1.0)]
    l2_strength: f64,
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 1000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "CHANFSL_THREADS", default_value_t = 1)]
    threads: usize,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Feature file (CSV or FSLF binary).
    #[arg(long)]
    features: PathBuf,
    #[command(flatten)]
    transform: TransformArgs,
    #[command(flatten)]
    episodes: EpisodeArgs,
    #[arg(long, default_value_t = 0, conflicts_with = "seed_list")]
    seed: u64,
    /// Comma-separated seeds; runs the whole evaluation once per seed and
    /// writes `<output stem>.seed<S>.<ext>` for each.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Report JSON path.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    features: PathBuf,
    /// Comma-separated k values.
    #[arg(long, value_delimiter = ',', required = true)]
    k_list: Vec<f64>,
    /// Use the extended (odd) transform instead of the simple one.
    #[arg(long)]
    extended: bool,
    #[command(flatten)]
    episodes: EpisodeArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV with columns k,mean_accuracy,ci95_halfwidth.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MmcModeArg {
    Original,
    Simple,
    Extended,
    Oracle,
}

#[derive(Args, Debug)]
struct MmcReportArgs {
    /// Feature file to analyse.
    #[arg(long, required_unless_present = "mmc_pair")]
    features: Option<PathBuf>,
    /// Second feature file (e.g. the training set) whose original MMC is
    /// compared with that of `--features`.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MmcModeArg::Original)]
    before: MmcModeArg,
    #[arg(long, value_enum, default_value_t = MmcModeArg::Oracle)]
    after: MmcModeArg,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: f64,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Per-channel scatter CSV (channel,mmc_before,mmc_after).
    #[arg(long)]
    scatter_out: Option<PathBuf>,
    /// Distance table as JSON.
    #[arg(long)]
    json_out: Option<PathBuf>,
    /// Scatter CSV of a precomputed before/after MMC pair; prints both
    /// distance measures for it. Repeatable.
    #[arg(long, conflicts_with_all = ["features", "reference", "scatter_out"])]
    mmc_pair: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    Cantelli,
    Lemma,
    RiskBound,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Monte Carlo trials per estimate.
    #[arg(long, default_value_t = chanfsl_core::theory::DEFAULT_TRIALS)]
    trials: usize,
    /// Restrict to these check families. Repeatable.
    #[arg(long, value_enum)]
    only: Vec<Family>,
    /// Machine-readable results.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum TableKind {
    Simple,
    Extended,
    Power,
    Log,
    Offset,
}

#[derive(Args, Debug)]
struct TableArgs {
    #[arg(long, value_enum, default_value_t = TableKind::Simple)]
    transform: TableKind,
    /// Comma-separated parameter values, one column each (k, or a for log).
    #[arg(long, value_delimiter = ',', default_value = "0.5,1.3,3")]
    params: Vec<f64>,
    /// Offset added by the offset transform.
    #[arg(long, default_value_t = 0.0)]
    r: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    lambda_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    lambda_max: f64,
    #[arg(long, default_value_t = 0.01)]
    lambda_step: f64,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum FileFormat {
    Csv,
    Binary,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    /// Samples per class.
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Class means are `base_mean * (1 + relative_spread * U(-1, 1))`.
    #[arg(long, default_value_t = 0.5)]
    base_mean: f64,
    #[arg(long, default_value_t = 0.3)]
    relative_spread: f64,
    /// Per-channel standard deviation.
    #[arg(long, default_value_t = 0.05)]
    std: f64,
    /// Allow means below four standard deviations.
    #[arg(long)]
    no_margin_rule: bool,
    /// Multiply channels by log-uniform scales in [1/F, F].
    #[arg(long)]
    bias_factor: Option<f64>,
    #[arg(long, value_enum, default_value_t = FileFormat::Csv)]
    format: FileFormat,
    #[arg(long)]
    output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Evaluate(args) => commands::evaluate(args),
        Command::SweepK(args) => commands::sweep_k(args),
        Command::MmcReport(args) => commands::mmc_report(args),
        Command::VerifyTheory(args) => commands::verify_theory(args),
        Command::TransformTable(args) => commands::transform_table(args),
        Command::SynthGen(args) => commands::synth_gen(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            commands::exit_code(&e)
        }
    }
}
