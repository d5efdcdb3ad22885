use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Estimate group fairness of rankings when group labels are unavailable.
///
/// Machine-readable JSON goes to stdout; progress and warnings go to stderr.
/// Exit status: 0 on success, 1 on an internal error, 2 on a usage or input
/// error.
#[derive(Debug, Parser)]
#[command(name = "qfe", version, propagate_version = true)]
pub struct Cli {
    /// More log output on stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic benchmark: L.jsonl, U.jsonl, queries.tsv and
    /// validation_queries.tsv.
    Generate(GenerateArgs),
    /// Select hyperparameters by 5-fold cross-validation, then train the
    /// group classifier on a labeled corpus.
    Train(TrainArgs),
    /// Estimate group prevalence and fairness of one ranking.
    Estimate(EstimateArgs),
    /// Run the full benchmark protocol and write the report files.
    Benchmark(BenchmarkArgs),
    /// Print the summary of a finished benchmark.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// TOML file with the synthetic spec; defaults apply to missing keys.
    #[arg(long)]
    pub spec: Option<PathBuf>,

    /// Output directory; its parent must exist.
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled JSON Lines corpus.
    #[arg(long)]
    pub corpus: PathBuf,

    /// Where to write the model file.
    #[arg(long)]
    pub model_out: PathBuf,

    /// Values of the inverse regularization strength C to search.
    #[arg(long, value_delimiter = ',', default_values_t = default_c_values())]
    pub c_values: Vec<f64>,

    /// Class weightings to search: none, balanced.
    #[arg(long, value_delimiter = ',', default_values_t = vec!["none".to_string(), "balanced".to_string()])]
    pub weightings: Vec<String>,

    /// Seed for the cross-validation folds.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn default_c_values() -> Vec<f64> {
    (-4..=4).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Model file written by `qfe train`.
    #[arg(long)]
    pub model: PathBuf,

    /// Labeled JSON Lines correction pool, searched with the same query.
    #[arg(long)]
    pub correction: Option<PathBuf>,

    /// JSON Lines documents of the ranking to assess, best first. Group
    /// fields, if any, are ignored.
    #[arg(long)]
    pub ranking: Option<PathBuf>,

    /// Query text used to search the correction pool.
    #[arg(long)]
    pub query: String,

    /// One of naive, cc, acc, pacc, kdey.
    #[arg(long)]
    pub method: String,

    /// Rank cutoffs k.
    #[arg(long, value_delimiter = ',', default_values_t = vec![50usize, 100, 500, 1000])]
    pub cutoffs: Vec<usize>,

    /// Target group distribution, in group-name order.
    #[arg(long, value_delimiter = ',', required = true)]
    pub target: Vec<f64>,

    /// KDE bandwidth for kdey.
    #[arg(long, default_value_t = 0.05)]
    pub bandwidth: f64,

    /// Retrieval depth for the correction pool.
    #[arg(long, default_value_t = 1000)]
    pub depth: usize,

    /// Keep at most this many best-scored documents per group.
    #[arg(long, default_value_t = 200)]
    pub cap_per_group: usize,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// TOML run configuration; defaults to the built-in synthetic benchmark.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Comma-separated subset of naive, cc, acc, pacc, kdey, pmc_b,
    /// pmc_b_plus, pmc_d, pmc_d_plus.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,

    #[arg(long, value_delimiter = ',')]
    pub cutoffs: Option<Vec<usize>>,

    /// Comma-separated pool sizes such as 10K,20K,full.
    #[arg(long, value_delimiter = ',')]
    pub pool_sizes: Option<Vec<String>>,

    /// Output directory for the report files.
    #[arg(long, default_value = "qfe-report")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory written by `qfe benchmark`.
    #[arg(long)]
    pub input: PathBuf,

    /// Also print plain-text tables to stderr.
    #[arg(long)]
    pub text: bool,
}
