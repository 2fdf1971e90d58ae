use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "nrgboost",
    version,
    about = "Generative boosting for tabular data"
)]
pub struct Cli {
    /// Worker threads for fitting, sampling and inference (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn log_level(&self) -> &'static str {
        if self.quiet {
            "warn"
        } else {
            "info"
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a boosted energy model to a CSV file.
    Train(TrainArgs),
    /// Draw rows from a model.
    Sample(SampleArgs),
    /// Predict one column from the others.
    Infer(InferArgs),
    /// Score single-column predictions against a labelled CSV file.
    Eval(EvalArgs),
    /// Generate the eight-Gaussian toy data set.
    Toy(ToyArgs),
    /// Describe a model file.
    Inspect(InspectArgs),
    /// Density estimation forests.
    #[command(subcommand)]
    Def(DefCommand),
}

#[derive(Debug, Subcommand)]
pub enum DefCommand {
    /// Fit a density estimation forest to a CSV file.
    Train(DefTrainArgs),
    /// Draw exact samples from a forest.
    Sample(SampleArgs),
    /// Score a forest against a labelled CSV file.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,

    /// Columns to treat as categorical (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,

    /// Columns to treat as numeric (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub numeric: Vec<String>,

    /// Columns to ignore (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub drop: Vec<String>,

    /// Maximum number of quantile bins per numeric column.
    #[arg(long, default_value_t = 255, value_parser = clap::value_parser!(u16).range(2..=256))]
    pub max_bins: u16,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Output model file.
    #[arg(long, short)]
    pub out: PathBuf,

    /// Per-round history CSV (default: `<out>.history.csv`).
    #[arg(long)]
    pub history: Option<PathBuf>,

    /// Column predicted during validation.
    #[arg(long)]
    pub target: Option<String>,

    /// Validation CSV used for early stopping.
    #[arg(long)]
    pub validation: Option<PathBuf>,

    /// TOML file with boosting settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub rounds: Option<usize>,

    /// Maximum leaves per tree.
    #[arg(long)]
    pub leaves: Option<usize>,

    #[arg(long)]
    pub max_ratio: Option<f64>,

    #[arg(long)]
    pub shrinkage: Option<f64>,

    #[arg(long)]
    pub pool_size: Option<usize>,

    #[arg(long)]
    pub p_refresh: Option<f64>,

    #[arg(long)]
    pub min_data_in_leaf: Option<usize>,

    #[arg(long)]
    pub min_model_in_leaf: Option<usize>,

    #[arg(long)]
    pub uniform_mix: Option<f64>,

    /// nrgboost, greedy_kl or greedy_chi2.
    #[arg(long)]
    pub update_rule: Option<String>,

    /// Rounds without validation improvement before stopping (0 disables).
    #[arg(long)]
    pub patience: Option<usize>,

    /// r2, auc, accuracy or log_likelihood.
    #[arg(long)]
    pub metric: Option<String>,

    #[arg(long)]
    pub burn_in_refill: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DefTrainArgs {
    #[command(flatten)]
    pub data: DataArgs,

    /// Output model file.
    #[arg(long, short)]
    pub out: PathBuf,

    /// TOML file with forest settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub trees: Option<usize>,

    /// Maximum leaves per tree.
    #[arg(long)]
    pub leaves: Option<usize>,

    #[arg(long)]
    pub feature_fraction: Option<f64>,

    #[arg(long)]
    pub min_data_in_leaf: Option<usize>,

    /// ise or kl.
    #[arg(long)]
    pub criterion: Option<String>,

    /// Fit every tree on the full data instead of a bootstrap resample.
    #[arg(long)]
    pub no_bootstrap: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Independent,
    Thinned,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, short)]
    pub model: PathBuf,

    /// Number of rows to draw.
    #[arg(long, short)]
    pub n: usize,

    /// Output CSV (default: stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Gibbs sweeps before the first emitted state (default 100).
    #[arg(long)]
    pub burn_in: Option<usize>,

    /// Chain layout (default thinned).
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,

    /// Sweeps between emitted states in thinned mode (default 10).
    #[arg(long)]
    pub thin: Option<usize>,

    /// Parallel chains in thinned mode (default 64).
    #[arg(long)]
    pub chains: Option<usize>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long, short)]
    pub model: PathBuf,

    /// CSV of observations with a header row.
    #[arg(long)]
    pub data: PathBuf,

    /// Column to predict.
    #[arg(long)]
    pub target: String,

    /// Columns to marginalize out (comma separated). Empty cells are
    /// marginalized too.
    #[arg(long, value_delimiter = ',')]
    pub missing: Vec<String>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub query: QueryArgs,

    /// mean, median or mode (default: mean for numeric, mode for categorical).
    #[arg(long)]
    pub statistic: Option<String>,

    /// Write the conditional probability of every bin instead of a point
    /// prediction.
    #[arg(long)]
    pub probabilities: bool,

    /// Output CSV (default: stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub query: QueryArgs,

    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Output file (default: stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    /// Number of points.
    #[arg(long, short, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Emit the exact discretized density on the 100x100 grid instead of
    /// samples.
    #[arg(long)]
    pub exact_density: bool,

    /// Output CSV (default: stdout).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, short)]
    pub model: PathBuf,
}
