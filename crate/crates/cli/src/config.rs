//! Serializable run configurations, echoed into every run directory.

use std::fs;
use std::path::{Path, PathBuf};

use iqn_rnn::data::{generate_gmm, load_dataset, DataFormat, Dataset, Domain, Freq, GmmSpec, LoadOptions};
use iqn_rnn::evaluation::MetricConfig;
use iqn_rnn::forecaster::ModelConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::args::{Baseline, DataArgs, GmmArgs, Precision};
use crate::error::{CliError, CliResult};

pub const TRAIN_CONFIG: &str = "train_config.json";
pub const CHECKPOINT: &str = "model.ckpt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    File { path: PathBuf, format: String },
    SynthGmm { spec: GmmSpec, seed: u64 },
}

impl DataSource {
    /// Loads the data as a dataset of the given domain, frequency and
    /// prediction length.
    pub fn load(&self, domain: Domain, freq: Freq, prediction_length: usize) -> CliResult<Dataset> {
        match self {
            DataSource::File { path, format } => {
                let format: DataFormat = format.parse()?;
                let name = path
                    .file_stem()
                    .map_or("data".into(), |s| s.to_string_lossy().into_owned());
                let opts = LoadOptions {
                    name,
                    freq,
                    domain,
                    prediction_length,
                };
                Ok(load_dataset(path, format, &opts)?)
            }
            DataSource::SynthGmm { spec, seed } => {
                if domain != Domain::Real || freq != Freq::Daily {
                    return Err(CliError::Config(format!(
                        "the Gaussian-mixture data is real-valued daily, model expects {domain} {freq}"
                    )));
                }
                let ds = generate_gmm(spec, *seed)?;
                Ok(Dataset::new(
                    ds.name.clone(),
                    freq,
                    domain,
                    prediction_length,
                    ds.series().to_vec(),
                )?)
            }
        }
    }

    pub fn gmm_spec(&self) -> Option<&GmmSpec> {
        match self {
            DataSource::SynthGmm { spec, .. } => Some(spec),
            DataSource::File { .. } => None,
        }
    }
}

pub fn gmm_spec(args: &GmmArgs, base: GmmSpec) -> GmmSpec {
    GmmSpec {
        weights: args.gmm_weights.clone().unwrap_or(base.weights),
        means: args.gmm_means.clone().unwrap_or(base.means),
        stds: args.gmm_stds.clone().unwrap_or(base.stds),
        num_series: args.gmm_series.unwrap_or(base.num_series),
        length: args.gmm_length.unwrap_or(base.length),
    }
}

/// The data source named by the flags, layered over `base` when the flags
/// only tweak the mixture.
pub fn data_source(args: &DataArgs, base: Option<&DataSource>) -> CliResult<Option<DataSource>> {
    if let Some(path) = &args.data {
        let format = match &args.format {
            Some(f) => {
                f.parse::<DataFormat>()?;
                f.clone()
            }
            None => match DataFormat::from_path(path) {
                DataFormat::Csv => "csv".into(),
                DataFormat::JsonLines => "jsonl".into(),
            },
        };
        return Ok(Some(DataSource::File {
            path: path.clone(),
            format,
        }));
    }
    let (spec, seed) = match base {
        Some(DataSource::SynthGmm { spec, seed }) => (spec.clone(), *seed),
        _ if args.synth_gmm => (GmmSpec::default(), 0),
        other => return Ok(other.cloned()),
    };
    Ok(Some(DataSource::SynthGmm {
        spec: gmm_spec(&args.gmm, spec),
        seed: args.gmm.gmm_seed.unwrap_or(seed),
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub data: DataSource,
    pub model: ModelConfig,
    pub precision: Precision,
    pub windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastConfig {
    pub checkpoint: PathBuf,
    pub data: DataSource,
    pub num_samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub checkpoint: Option<PathBuf>,
    pub baseline: Option<Baseline>,
    /// Describes the forecaster; copied from the checkpoint when there is one.
    pub model: ModelConfig,
    pub data: DataSource,
    pub windows: usize,
    pub num_samples: usize,
    pub seed: u64,
    pub metrics: MetricConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub spec: GmmSpec,
    pub seed: u64,
    pub format: String,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Training defaults for a data source: mixture data is real-valued daily
/// with two-step horizons and one window; files default to hourly positive
/// data with a day-long horizon.
pub fn defaults_for(
    source: &DataSource,
    domain: Option<Domain>,
    freq: Option<Freq>,
    pred: Option<usize>,
) -> (ModelConfig, usize) {
    let (d_domain, d_freq, d_pred, windows) = match source {
        DataSource::SynthGmm { .. } => (Domain::Real, Freq::Daily, 2, 1),
        DataSource::File { .. } => {
            let f = freq.unwrap_or(Freq::Hourly);
            let p = match f {
                Freq::Hourly => 24,
                Freq::Daily => 30,
            };
            (Domain::Positive, f, p, f.default_windows())
        }
    };
    let cfg = ModelConfig::new(
        pred.unwrap_or(d_pred),
        domain.unwrap_or(d_domain),
        freq.unwrap_or(d_freq),
    );
    (cfg, windows)
}
