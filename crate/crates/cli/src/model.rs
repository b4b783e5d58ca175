use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use iqn_rnn::data::Dataset;
use iqn_rnn::evaluation::Forecaster;
use iqn_rnn::forecaster::{ForecastRequest, ForecastSampleSet, IqnRnn, ModelConfig, TrainReport};
use iqn_rnn::{Error, Result};

use crate::args::Precision;

/// A forecaster at either precision.
pub enum AnyModel {
    F32(IqnRnn<f32>),
    F64(IqnRnn<f64>),
}

macro_rules! both {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::F32($m) => $body,
            AnyModel::F64($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn new(config: ModelConfig, precision: Precision) -> Result<Self> {
        Ok(match precision {
            Precision::F32 => AnyModel::F32(IqnRnn::new(config)?),
            Precision::F64 => AnyModel::F64(IqnRnn::new(config)?),
        })
    }

    /// Reads a checkpoint at whichever precision its `dtype` line names.
    pub fn load(path: &Path) -> Result<Self> {
        let open = || -> Result<BufReader<File>> {
            File::open(path)
                .map(BufReader::new)
                .map_err(|e| Error::Data(format!("cannot open checkpoint {}: {e}", path.display())))
        };
        let dtype = open()?
            .lines()
            .nth(1)
            .transpose()?
            .ok_or_else(|| Error::Checkpoint(format!("{} is truncated", path.display())))?;
        match dtype.trim() {
            "dtype f32" => Ok(AnyModel::F32(IqnRnn::load(open()?)?)),
            "dtype f64" => Ok(AnyModel::F64(IqnRnn::load(open()?)?)),
            other => Err(Error::Checkpoint(format!("unrecognised dtype line `{other}`"))),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        both!(self, m => m.config())
    }

    pub fn fit(&mut self, dataset: &Dataset) -> Result<TrainReport> {
        both!(self, m => m.fit(dataset))
    }

    pub fn save(&self, out: &mut dyn Write) -> Result<()> {
        both!(self, m => m.save(out))
    }
}

impl Forecaster for AnyModel {
    fn forecast(
        &self,
        requests: &[ForecastRequest<'_>],
        prediction_length: usize,
        num_samples: usize,
        seed: u64,
    ) -> Result<Vec<ForecastSampleSet>> {
        both!(self, m => m.forecast(requests, prediction_length, num_samples, seed))
    }
}
