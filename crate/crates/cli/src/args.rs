use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "retinode", version, about = "Train and evaluate continuous-time models of retinal responses")]
pub struct Cli {
    /// Training config: a TOML file or `preset:NAME`.
    #[arg(long, global = true)]
    pub config: Option<String>,

    /// Overrides the seed of the config (and of `synth`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Directory for every artifact.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic recording.
    Synth(SynthArgs),
    /// Train a model and write best/last checkpoints plus curves.
    Train(TrainArgs),
    /// Score checkpoints on a split.
    Eval(EvalArgs),
    /// Time inference per data point.
    Bench(BenchArgs),
    /// Score checkpoints on noise-perturbed stimuli.
    NoiseEval(NoiseArgs),
    /// Random search over the recurrent hyperparameter space.
    Sweep(SweepArgs),
    /// List built-in config presets.
    Presets,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of frames.
    #[arg(long)]
    pub t: usize,
    /// Number of response channels.
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub lag_min: Option<usize>,
    #[arg(long)]
    pub lag_max: Option<usize>,
    /// Target fraction of zero responses.
    #[arg(long)]
    pub sparsity: Option<f64>,
    /// Output container (default `<out-dir>/synthetic.rgcd`).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Recording container.
    #[arg(long)]
    pub data: PathBuf,
    /// Independent runs with seeds seed, seed+1, …; each writes to `run-<i>/`.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoints to score; repeat the flag for several.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    /// Also score freshly initialised models of these kinds (built from the config).
    #[arg(long = "fresh", value_delimiter = ',')]
    pub fresh: Vec<String>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    /// Model kinds to time with fresh weights, e.g. `convnet,lstm,ltc,cfc`.
    #[arg(long = "models", value_delimiter = ',')]
    pub models: Vec<String>,
    /// Batched size (default: the config's eval batch).
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    /// Time at most this many test windows per repetition.
    #[arg(long)]
    pub max_samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Noise levels in grey levels; 0 is the clean reference.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 25.0, 50.0])]
    pub sigmas: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Stop after this many trials.
    #[arg(long, conflicts_with = "budget_seconds", required_unless_present = "budget_seconds")]
    pub budget_runs: Option<usize>,
    /// Start no new trial after this many seconds.
    #[arg(long)]
    pub budget_seconds: Option<f64>,
    /// Epoch cap per trial.
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    /// Trainings run concurrently.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Retrain the best config this many times and report test ρ with a 95% interval.
    #[arg(long, default_value_t = 0)]
    pub retrain: usize,
    /// TOML file overriding the search space.
    #[arg(long)]
    pub space: Option<PathBuf>,
}
