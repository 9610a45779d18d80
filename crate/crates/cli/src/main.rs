mod commands;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use curviqa::{BlockPolicy, Distortion};

#[derive(Parser)]
#[command(
    name = "curviqa",
    version,
    about = "No-reference image quality from curvelet statistics"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CURVIQA_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write one feature row per image to CSV
    Extract(ExtractArgs),
    /// Run the repeated train/test protocol on a manifest
    Train(TrainArgs),
    /// Predict quality of images with a trained model
    Predict(PredictArgs),
    /// Summarize a results file, optionally against a baseline
    Evaluate(EvaluateArgs),
    /// Run the built-in property checks
    Selftest(SelftestArgs),
    /// Time the main pipeline stages
    Benchmark(BenchmarkArgs),
    /// Generate a synthetic degraded-image dataset with a manifest
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct ExtractArgs {
    /// Image file or directory of images.
    #[arg(long)]
    pub input: PathBuf,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "flush")]
    pub block_policy: BlockPolicy,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// External test manifests, evaluated in full every round.
    #[arg(long = "test")]
    pub tests: Vec<PathBuf>,
    /// `key = value` file; its settings override command-line flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of rounds, taken from the start of the split plan.
    #[arg(long)]
    pub rounds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Distortion classes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<Distortion>>,
    /// Use the small 3×3 search grid.
    #[arg(long)]
    pub reduced_grid: bool,
    #[arg(long)]
    pub block_policy: Option<BlockPolicy>,
    /// Skip writing per-round model files.
    #[arg(long)]
    pub no_models: bool,
    /// Also train on every training image and write `model.ciqm`.
    #[arg(long = "final")]
    pub final_model: bool,
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "image", required = true)]
    pub images: Vec<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub results: PathBuf,
    /// Results of a competing model over the same rounds.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Names for the two result sets in the comparison table.
    #[arg(long, value_delimiter = ',', default_values = ["model", "baseline"])]
    pub labels: Vec<String>,
    /// Write the comparison table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = curviqa::eval::ALPHA)]
    pub alpha: f64,
}

#[derive(Args)]
pub struct SelftestArgs {
    /// Random blocks per transform check.
    #[arg(long, default_value_t = 8)]
    pub blocks: usize,
    #[arg(long, default_value_t = 20_240_101)]
    pub seed: u64,
    /// Scale one curvelet window by this factor (negative control).
    #[arg(long, hide = true)]
    pub perturb_window: Option<f64>,
}

#[derive(Args)]
pub struct BenchmarkArgs {
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Side of the synthetic test image.
    #[arg(long, default_value_t = 512)]
    pub size: usize,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of clean base images.
    #[arg(long, default_value_t = 6)]
    pub bases: usize,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let workers = cli.workers;
    let result = match cli.command {
        Command::Extract(a) => commands::extract(&a, workers),
        Command::Train(a) => commands::train(&a, workers),
        Command::Predict(a) => commands::predict(&a, workers),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Selftest(a) => commands::selftest(&a, workers),
        Command::Benchmark(a) => commands::benchmark(&a, workers),
        Command::Synth(a) => commands::synth(&a, workers),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
