//! `gdp`: simulate data, train and fine-tune generators, sample, predict and evaluate.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gdp_core::predict::LossSpec;
use gdp_core::simbench::Case;

#[derive(Debug, Parser)]
#[command(name = "gdp", version, about = "Generative distribution prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the heteroscedastic benchmark model to a CSV file.
    Simulate(SimulateArgs),
    /// Train a generator on a CSV dataset and write a checkpoint.
    Train(TrainArgs),
    /// Fine-tune a source checkpoint on target data.
    Finetune(FinetuneArgs),
    /// Draw m synthetic responses per condition row.
    Generate(GenerateArgs),
    /// Turn synthetic samples into point predictions under a loss.
    Predict(PredictArgs),
    /// Score predictions against observed values.
    Eval(EvalArgs),
    /// Run the quantile-regression benchmark end to end.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; overrides the config and GDP_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Response column name(s), comma separated.
    #[arg(long = "target-col", default_value = "y", value_delimiter = ',')]
    target_col: Vec<String>,
    /// Treat the response as categorical labels.
    #[arg(long)]
    categorical: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_parser = parse_case, default_value = "I")]
    case: Case,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Output CSV; columns x1..xp, y.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    columns: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Tag the checkpoint as a transfer source.
    #[arg(long)]
    source: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    /// Source checkpoint.
    #[arg(long = "from")]
    from: PathBuf,
    /// Target dataset.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    columns: DataArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Update the condition embedder as well.
    #[arg(long)]
    unfreeze_embedder: bool,
    /// Re-initialize the score network instead of starting from the source.
    #[arg(long)]
    cold_start: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV of condition rows; a column named by --target-col is ignored.
    #[arg(long)]
    conditions: PathBuf,
    #[arg(long = "target-col", default_value = "y")]
    target_col: String,
    #[arg(long, short = 'm', default_value_t = 1000)]
    m: usize,
    /// Reverse-pass stride (gaussian generators).
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Sample CSV as written by `generate`.
    #[arg(long)]
    samples: PathBuf,
    /// squared | absolute | pinball:<alpha> | zero_one | medoid:<euclidean|cosine>
    #[arg(long, value_parser = parse_loss)]
    loss: LossSpec,
    /// Output CSV; printed to stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Column compared in both files.
    #[arg(long, default_value = "y")]
    column: String,
    /// Report accuracy and kappa instead of RMSE and MAD.
    #[arg(long)]
    categorical: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[arg(long, value_parser = parse_case, default_value = "I")]
    case: Case,
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    test_subset: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    /// Evaluate every test point with the full reverse chain.
    #[arg(long)]
    full_fidelity: bool,
    /// CSV report; the table is always printed.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn parse_case(s: &str) -> Result<Case, String> {
    s.parse().map_err(|e: gdp_core::Error| e.to_string())
}

fn parse_loss(s: &str) -> Result<LossSpec, String> {
    s.parse().map_err(|e: gdp_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Train(a) => commands::train(a),
        Command::Finetune(a) => commands::finetune(a),
        Command::Generate(a) => commands::generate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::Benchmark(a) => commands::benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
