use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use iqn_rnn::data::{Domain, Freq};
use iqn_rnn::forecaster::ModelConfig;

#[derive(Debug, Parser)]
#[command(name = "iqn-rnn", version, about = "Train, sample and score IQN-RNN forecasters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Directory receiving every output of the run.
    #[arg(long, global = true, env = "IQN_RNN_OUT_DIR", default_value = "runs/latest")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model on everything before the evaluation windows.
    Train(TrainArgs),
    /// Sample trajectories past the end of every series.
    Forecast(ForecastArgs),
    /// Backtest a checkpoint (or a baseline) on the evaluation windows.
    Evaluate(EvaluateArgs),
    /// Write a Gaussian-mixture dataset.
    Synth(SynthArgs),
    /// Finite-difference check of the training gradient.
    Gradcheck(GradcheckArgs),
}

fn parse_domain(s: &str) -> Result<Domain, String> {
    s.parse().map_err(|e: iqn_rnn::Error| e.to_string())
}

fn parse_freq(s: &str) -> Result<Freq, String> {
    s.parse().map_err(|e: iqn_rnn::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    /// Every sample equals the realised future.
    Clairvoyant,
    /// Samples past values at the same seasonal phase.
    SeasonalNaive,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GmmArgs {
    #[arg(long)]
    pub gmm_series: Option<usize>,
    #[arg(long)]
    pub gmm_length: Option<usize>,
    /// Seed of the generated data (independent of the model seed).
    #[arg(long)]
    pub gmm_seed: Option<u64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub gmm_weights: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub gmm_means: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub gmm_stds: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Dataset file (JSON lines or CSV).
    #[arg(long, conflicts_with = "synth_gmm")]
    pub data: Option<PathBuf>,
    /// `jsonl` or `csv`; guessed from the extension when absent.
    #[arg(long)]
    pub format: Option<String>,
    /// Generate the Gaussian-mixture dataset instead of reading a file.
    #[arg(long)]
    pub synth_gmm: bool,
    #[command(flatten)]
    pub gmm: GmmArgs,
}

/// One flag per `ModelConfig` field.
#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub hidden_size: Option<usize>,
    #[arg(long)]
    pub num_layers: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long, visible_alias = "context")]
    pub context_length: Option<usize>,
    #[arg(long, visible_alias = "pred")]
    pub prediction_length: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub batches_per_epoch: Option<usize>,
    #[arg(long)]
    pub num_parallel_samples: Option<usize>,
    #[arg(long)]
    pub n_cos: Option<usize>,
    #[arg(long, value_parser = parse_domain)]
    pub domain: Option<Domain>,
    #[arg(long, value_parser = parse_freq)]
    pub freq: Option<Freq>,
    #[arg(long)]
    pub seed: Option<u64>,
}

macro_rules! each_field {
    ($m:ident) => {
        $m!(
            hidden_size,
            num_layers,
            dropout,
            context_length,
            prediction_length,
            epochs,
            learning_rate,
            batch_size,
            batches_per_epoch,
            num_parallel_samples,
            n_cos,
            domain,
            freq,
            seed
        )
    };
}

impl ModelArgs {
    pub fn apply(&self, cfg: &mut ModelConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { cfg.$f = v; } )* };
        }
        each_field!(set);
    }

    /// Flags whose value differs from `cfg`, as `--flag a vs b` strings.
    pub fn conflicts(&self, cfg: &ModelConfig) -> Vec<String> {
        let mut out = Vec::new();
        macro_rules! cmp {
            ($($f:ident),*) => { $(
                if let Some(v) = self.$f {
                    if v != cfg.$f {
                        out.push(format!("--{} {:?} vs checkpoint {:?}", stringify!($f).replace('_', "-"), v, cfg.$f));
                    }
                }
            )* };
        }
        each_field!(cmp);
        out
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Start from an echoed `train_config.json`; flags still override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// Evaluation windows withheld from the end of every series.
    #[arg(long)]
    pub windows: Option<usize>,
    /// Validate the configuration and data, write the config echo, skip training.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Defaults to `<out-dir>/model.ckpt`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub num_samples: Option<usize>,
    /// Sampling seed; defaults to the model seed.
    #[arg(long)]
    pub sample_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Defaults to `<out-dir>/model.ckpt` unless a baseline is chosen.
    #[arg(long, conflicts_with = "baseline")]
    pub checkpoint: Option<PathBuf>,
    /// Score a reference forecaster instead of a checkpoint.
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub windows: Option<usize>,
    #[arg(long)]
    pub num_samples: Option<usize>,
    #[arg(long)]
    pub sample_seed: Option<u64>,
    /// Seasonal period of the MASE/MSIS scale; hourly 24, daily 1 by default.
    #[arg(long)]
    pub seasonality: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Levels averaged into the CRPS.
    #[arg(long, value_delimiter = ',')]
    pub quantile_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub gmm: GmmArgs,
    /// `jsonl` or `csv`.
    #[arg(long, default_value = "jsonl")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, value_parser = parse_domain, default_value = "positive")]
    pub domain: Domain,
    #[arg(long, default_value_t = 1)]
    pub num_layers: usize,
}
