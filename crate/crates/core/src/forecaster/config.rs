use serde::{Deserialize, Serialize};

use crate::data::{Domain, Freq};
use crate::error::{Error, Result};

/// Model and training hyperparameters.
///
/// [`ModelConfig::new`] fills in the standard defaults: 3 GRU layers of 64
/// units, dropout 0.2, context twice the horizon, 10 epochs of 120 batches
/// of 256 windows, Adam at 1e-3, 100 sample paths and 64 cosine features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub context_length: usize,
    pub prediction_length: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub num_parallel_samples: usize,
    pub n_cos: usize,
    pub domain: Domain,
    pub freq: Freq,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(prediction_length: usize, domain: Domain, freq: Freq) -> Self {
        Self {
            hidden_size: 64,
            num_layers: 3,
            dropout: 0.2,
            context_length: 2 * prediction_length,
            prediction_length,
            epochs: 10,
            learning_rate: 1e-3,
            batch_size: 256,
            batches_per_epoch: 120,
            num_parallel_samples: 100,
            n_cos: 64,
            domain,
            freq,
            seed: 0,
        }
    }

    /// Context plus horizon: the number of steps unrolled per training window.
    pub fn window_length(&self) -> usize {
        self.context_length + self.prediction_length
    }

    /// Inputs per step: two calendar features, log-age, lagged target.
    pub fn input_size(&self) -> usize {
        super::features::NUM_COVARIATES + 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_size", self.hidden_size),
            ("num_layers", self.num_layers),
            ("context_length", self.context_length),
            ("prediction_length", self.prediction_length),
            ("batch_size", self.batch_size),
            ("batches_per_epoch", self.batches_per_epoch),
            ("num_parallel_samples", self.num_parallel_samples),
            ("n_cos", self.n_cos),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        Ok(())
    }
}
