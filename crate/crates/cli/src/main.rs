mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdtune_core::experiment::ShapleyMethod;
use crowdtune_core::{EvalMethod, GroupingMethod, ValueMetric};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "CROWDTUNE_OUT";

#[derive(Parser)]
#[command(name = "crowdtune", version, about = "Crowd-sourced tournament fine-tuning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a population file from MovieLens-100K ratings or a synthetic draw
    Ingest(IngestArgs),
    /// Run group-based simulations and write round tables and ledgers
    Simulate(SimulateArgs),
    /// Run every method pair over a grid of user and group counts
    Sweep(SweepArgs),
    /// Simulate, then estimate per-user Shapley values and correlate them with points
    Shapley(ShapleyArgs),
    /// Compare tournament fine-tuning against a single model on one sample pool
    Tournament(TournamentArgs),
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["ratings", "synthetic"])))]
pub struct IngestArgs {
    /// Tab-separated ratings file (user, item, rating, timestamp)
    #[arg(long, requires = "items")]
    pub ratings: Option<PathBuf>,
    /// Pipe-separated item file ending in 19 genre flags
    #[arg(long, requires = "ratings")]
    pub items: Option<PathBuf>,
    /// Generate this many uniform users instead of parsing
    #[arg(long, conflicts_with_all = ["ratings", "items"])]
    pub synthetic: Option<usize>,
    /// Dimension of synthetic users
    #[arg(long, default_value_t = 19, requires = "synthetic")]
    pub dim: usize,
    #[arg(long, requires = "synthetic")]
    pub seed: Option<u64>,
    /// Population file to write [default: $CROWDTUNE_OUT/population.json]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum GroupingArg {
    Random,
    Egreedy,
    Interleaved,
}

impl From<GroupingArg> for GroupingMethod {
    fn from(g: GroupingArg) -> Self {
        match g {
            GroupingArg::Random => GroupingMethod::Random,
            GroupingArg::Egreedy => GroupingMethod::EpsilonGreedy,
            GroupingArg::Interleaved => GroupingMethod::Interleaved,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EvalArg {
    L2,
    L1,
    Dot,
}

impl From<EvalArg> for EvalMethod {
    fn from(e: EvalArg) -> Self {
        match e {
            EvalArg::L2 => EvalMethod::L2,
            EvalArg::L1 => EvalMethod::L1,
            EvalArg::Dot => EvalMethod::DotProduct,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    /// Exact up to 14 users, kernel above
    Auto,
    Exact,
    Kernel,
    Perm,
}

impl From<EstimatorArg> for ShapleyMethod {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Auto => ShapleyMethod::Auto,
            EstimatorArg::Exact => ShapleyMethod::Exact,
            EstimatorArg::Kernel => ShapleyMethod::Kernel,
            EstimatorArg::Perm => ShapleyMethod::Permutation,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum MetricArg {
    /// Negative L2 distance of the coalition's final model to the expert
    L2,
    /// The run's evaluation method applied to the final model
    Evaluation,
}

impl From<MetricArg> for ValueMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::L2 => ValueMetric::L2Distance,
            MetricArg::Evaluation => ValueMetric::Evaluation,
        }
    }
}

/// Protocol settings shared by simulate and shapley.
#[derive(Args)]
pub struct SimFlags {
    /// JSON settings file, or a manifest from an earlier run; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Population file from `ingest`; users are sampled from it [default: synthetic]
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// Dimension of synthetic populations [default: 19]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Number of users [default: 50, or the population size]
    #[arg(long)]
    pub users: Option<usize>,
    /// Number of groups, at most the number of users [default: 3]
    #[arg(long)]
    pub groups: Option<usize>,
    /// Rounds per run, at least 1 [default: 100]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rounds: Option<u64>,
    /// Step toward the group centroid, in (0, 1] [default: 0.1]
    #[arg(long)]
    pub delta: Option<f64>,
    /// [default: random]
    #[arg(long, value_enum)]
    pub grouping: Option<GroupingArg>,
    /// [default: l2]
    #[arg(long, value_enum)]
    pub eval: Option<EvalArg>,
    /// Probability the expert picks a non-best candidate, in [0, 1) [default: 0.05]
    #[arg(long)]
    pub error_rate: Option<f64>,
    /// Exploration probability at the first round for egreedy [default: 1.0]
    #[arg(long)]
    pub epsilon_start: Option<f64>,
    /// Exploration probability at the last round for egreedy [default: 0.1]
    #[arg(long)]
    pub epsilon_end: Option<f64>,
    /// Independent runs; run r uses a seed derived from --seed and r [default: 1]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimFlags,
}

#[derive(Args)]
pub struct ShapleyArgs {
    #[command(flatten)]
    pub sim: SimFlags,
    /// [default: auto]
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    /// Coalitions for kernel, orderings for perm [default: 2048]
    #[arg(long)]
    pub budget: Option<usize>,
    /// Coalition value [default: l2]
    #[arg(long, value_enum)]
    pub value_metric: Option<MetricArg>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub population: Option<PathBuf>,
    /// [default: 19]
    #[arg(long)]
    pub dim: Option<usize>,
    /// User counts [default: 10,25,50,75,100]
    #[arg(long, value_delimiter = ',')]
    pub users: Option<Vec<usize>>,
    /// Group counts [default: 2,3,4,5]
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<usize>>,
    /// Grouping methods [default: all]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub grouping: Option<Vec<GroupingArg>>,
    /// Evaluation methods [default: all]
    #[arg(long, value_enum, value_delimiter = ',')]
    pub eval: Option<Vec<EvalArg>>,
    /// Runs per cell and method pair [default: 20]
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub runs: Option<u64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub rounds: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub error_rate: Option<f64>,
    #[arg(long)]
    pub epsilon_start: Option<f64>,
    #[arg(long)]
    pub epsilon_end: Option<f64>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorArg>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// Coalition value [default: l2]
    #[arg(long, value_enum)]
    pub value_metric: Option<MetricArg>,
    /// Required: master seed of the whole sweep
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parallel runs [default: all cores]
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct TournamentArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pool size [default: 100]
    #[arg(long)]
    pub k: Option<usize>,
    /// Clones per iteration, at least 2 [default: 3]
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub clones: Option<u64>,
    /// [default: 3]
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Fine-tuning step toward the sample mean, in (0, 1] [default: 0.3]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Standard deviation of samples around the target [default: 0.2]
    #[arg(long)]
    pub spread: Option<f64>,
    /// [default: 28]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Sample counts for the single-model baseline [default: 33,66,100]
    #[arg(long, value_delimiter = ',')]
    pub baseline: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = OUT_ENV)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Shapley(a) => commands::shapley(a),
        Command::Tournament(a) => commands::tournament(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
