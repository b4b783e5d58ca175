use std::io::{BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::features::{covariates, ScaleState};
use super::samples::ForecastSampleSet;
use crate::autodiff::{Element, ParamStore, Tape, Tensor, Var};
use crate::data::{Dataset, Domain, TimeSeries};
use crate::error::{Error, Result};
use crate::iqn::{quantile_loss_on_tape, IqnHead};
use crate::neural::checkpoint::{read_checkpoint, write_checkpoint, Metadata};
use crate::neural::{init_parameters, Adam, GruStack};

/// Rows per batched inference step; chunks of series are sized to this.
const INFERENCE_ROWS: usize = 4096;

/// A training window: `window_length` steps starting at `start`.
#[derive(Clone, Copy, Debug)]
pub struct Window<'a> {
    pub series: &'a TimeSeries,
    pub start: usize,
}

/// Teacher-forced inputs and scaled targets for a batch of windows.
#[derive(Clone, Debug)]
pub struct WindowBatch {
    batch: usize,
    steps: usize,
    features: usize,
    /// Per step, `[batch x features]` row-major.
    inputs: Vec<Vec<f64>>,
    /// Per step, `[batch]`.
    targets: Vec<Vec<f64>>,
}

impl WindowBatch {
    pub fn new(config: &ModelConfig, windows: &[Window<'_>]) -> Result<Self> {
        let steps = config.window_length();
        let features = config.input_size();
        let batch = windows.len();
        if batch == 0 {
            return Err(Error::Contract("empty window batch".into()));
        }
        let mut inputs = vec![Vec::with_capacity(batch * features); steps];
        let mut targets = vec![Vec::with_capacity(batch); steps];
        for w in windows {
            let y = w.series.values();
            if w.start + steps > y.len() {
                return Err(Error::Data(format!(
                    "window at {} of length {steps} exceeds series `{}` ({} points)",
                    w.start,
                    w.series.id,
                    y.len()
                )));
            }
            let scale = ScaleState::from_context(config.domain, &y[w.start..w.start + config.context_length]);
            let t_ref = w.start + steps;
            for j in 0..steps {
                let t = w.start + j;
                let lag = if t == 0 { 0.0 } else { scale.scale(y[t - 1]) };
                inputs[j].extend(covariates(config.freq, w.series.start, t, t_ref));
                inputs[j].push(lag);
                targets[j].push(scale.scale(y[t]));
            }
        }
        Ok(Self {
            batch,
            steps,
            features,
            inputs,
            targets,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// Next per-layer state and, optionally, the emitted values.
type EvalStep<T> = (Vec<Tensor<T>>, Option<Vec<f64>>);

/// Which series a forecast is for and where it starts.
#[derive(Clone, Copy, Debug)]
pub struct ForecastRequest<'a> {
    pub series: &'a TimeSeries,
    /// Observations visible to the model; forecasting starts at this index.
    pub history_len: usize,
    /// Random stream for this request; distinct requests should use
    /// distinct streams.
    pub stream: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Series too short for one window.
    pub skipped_series: usize,
}

/// The autoregressive GRU with an implicit quantile head.
#[derive(Clone, Debug)]
pub struct IqnRnn<T: Element> {
    config: ModelConfig,
    store: ParamStore<T>,
    rnn: GruStack,
    head: IqnHead,
}

impl<T: Element> IqnRnn<T> {
    /// Builds the model and initialises parameters from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let rnn = GruStack::new(
            &mut store,
            "rnn",
            config.input_size(),
            config.hidden_size,
            config.num_layers,
            config.dropout,
        )?;
        let head = IqnHead::new(&mut store, "head", config.hidden_size, config.n_cos, config.domain)?;
        init_parameters(&mut store, config.seed);
        Ok(Self {
            config,
            store,
            rnn,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Mean quantile loss over every step of every window in `batch`.
    ///
    /// `taus[j][b]` is the quantile level for window `b` at step `j`.
    /// Passing an RNG enables dropout.
    pub fn loss_on_tape<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        batch: &WindowBatch,
        taus: &[Vec<f64>],
        mut dropout_rng: Option<&mut R>,
    ) -> Result<Var> {
        if taus.len() != batch.steps || taus.iter().any(|t| t.len() != batch.batch) {
            return Err(Error::Contract("quantile levels must be [steps x batch]".into()));
        }
        let mut state: Vec<Var> = self
            .rnn
            .zero_state(batch.batch)
            .into_iter()
            .map(|t| tape.constant(t))
            .collect();
        let mut losses = Vec::with_capacity(batch.steps);
        for ((inputs, targets), taus) in batch.inputs.iter().zip(&batch.targets).zip(taus) {
            let x = tape.constant(Tensor::from_f64(&[batch.batch, batch.features], inputs)?);
            let (out, next) = self
                .rnn
                .step(tape, &self.store, x, &state, dropout_rng.as_deref_mut())?;
            state = next;
            let y_hat = self.head.emit(tape, &self.store, out, taus)?;
            let y = tape.constant(Tensor::from_f64(&[batch.batch, 1], targets)?);
            losses.push(quantile_loss_on_tape(tape, taus, y, y_hat)?);
        }
        let all = tape.concat(&losses, 1)?;
        tape.mean(all, None)
    }

    /// Trains for `config.epochs × config.batches_per_epoch` Adam steps.
    pub fn fit(&mut self, dataset: &Dataset) -> Result<TrainReport> {
        let cfg = self.config.clone();
        if dataset.domain != cfg.domain || dataset.freq != cfg.freq {
            return Err(Error::Config(format!(
                "model expects {} {} data, dataset is {} {}",
                cfg.domain, cfg.freq, dataset.domain, dataset.freq
            )));
        }
        let need = cfg.window_length();
        let eligible: Vec<&TimeSeries> = dataset.series().iter().filter(|s| s.len() >= need).collect();
        let skipped = dataset.len() - eligible.len();
        if skipped > 0 {
            log::warn!("skipping {skipped} series shorter than one window ({need} steps)");
        }
        if eligible.is_empty() {
            return Err(Error::EmptyDataset(format!(
                "no series in `{}` has the {need} observations one training window needs",
                dataset.name
            )));
        }
        let picker = WeightedIndex::new(eligible.iter().map(|s| s.len())).map_err(|e| Error::Data(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let mut adam = Adam::new(&self.store, cfg.learning_rate);
        let mut epoch_losses = Vec::with_capacity(cfg.epochs);

        for epoch in 0..cfg.epochs {
            let mut total = 0.0;
            for _ in 0..cfg.batches_per_epoch {
                let windows: Vec<Window<'_>> = (0..cfg.batch_size)
                    .map(|_| {
                        let series = eligible[picker.sample(&mut rng)];
                        let start = rng.random_range(0..=series.len() - need);
                        Window { series, start }
                    })
                    .collect();
                let batch = WindowBatch::new(&cfg, &windows)?;
                let taus: Vec<Vec<f64>> = (0..need)
                    .map(|_| (0..cfg.batch_size).map(|_| rng.random::<f64>()).collect())
                    .collect();
                let mut tape = Tape::new();
                let loss = self.loss_on_tape(&mut tape, &batch, &taus, Some(&mut rng))?;
                let value = tape.value(loss).item()?.to_f64_lossy();
                if !value.is_finite() {
                    return Err(Error::Numerical(format!("loss became {value} in epoch {epoch}")));
                }
                let grads = tape.backward(loss)?;
                self.store.zero_grad();
                grads.accumulate_into(&tape, &mut self.store)?;
                adam.step(&mut self.store)?;
                total += value;
            }
            let mean = total / cfg.batches_per_epoch as f64;
            log::info!("epoch {}/{}: loss {mean:.6}", epoch + 1, cfg.epochs);
            epoch_losses.push(mean);
        }
        if self.store.iter().any(|(_, _, t)| !t.all_finite()) {
            return Err(Error::Numerical("non-finite parameters after training".into()));
        }
        Ok(TrainReport {
            epoch_losses,
            skipped_series: skipped,
        })
    }

    fn check_request(&self, r: &ForecastRequest<'_>) -> Result<()> {
        let c = self.config.context_length;
        if r.history_len < c || r.history_len > r.series.len() {
            return Err(Error::Data(format!(
                "series `{}`: history of {} points cannot supply a context of {c} (series has {})",
                r.series.id,
                r.history_len,
                r.series.len()
            )));
        }
        if r.series.domain != self.config.domain || r.series.freq != self.config.freq {
            return Err(Error::Config(format!(
                "series `{}` is {} {}, model expects {} {}",
                r.series.id, r.series.domain, r.series.freq, self.config.domain, self.config.freq
            )));
        }
        Ok(())
    }

    /// Ancestral sampling of `num_samples` trajectories per request.
    ///
    /// The state is conditioned on the last `context_length` observations
    /// before `history_len`; each horizon step then draws `τ ~ U(0, 1)`,
    /// emits the τ-quantile and feeds it back as the next lagged input.
    /// Results depend only on the parameters, each request, `seed` and
    /// the request's stream.
    pub fn sample_forecasts(
        &self,
        requests: &[ForecastRequest<'_>],
        num_samples: usize,
        seed: u64,
    ) -> Result<Vec<ForecastSampleSet>> {
        if num_samples == 0 {
            return Err(Error::Config("num_samples must be positive".into()));
        }
        requests.iter().try_for_each(|r| self.check_request(r))?;
        let chunk = (INFERENCE_ROWS / num_samples).max(1);
        let mut out = Vec::with_capacity(requests.len());
        for part in requests.chunks(chunk) {
            out.extend(self.sample_chunk(part, num_samples, seed)?);
        }
        Ok(out)
    }

    /// Advances the state one step; emits quantiles when `taus` is given.
    fn run_eval_step(&self, state: &[Tensor<T>], inputs: &[f64], taus: Option<&[f64]>) -> Result<EvalStep<T>> {
        let rows = state[0].shape()[0];
        let mut tape = Tape::no_grad();
        let x = tape.constant(Tensor::from_f64(&[rows, self.config.input_size()], inputs)?);
        let h: Vec<Var> = state.iter().map(|s| tape.constant(s.clone())).collect();
        let (top, next) = self.rnn.step(&mut tape, &self.store, x, &h, None::<&mut ChaCha8Rng>)?;
        let emitted = match taus {
            Some(taus) => {
                let y = self.head.emit(&mut tape, &self.store, top, taus)?;
                Some(tape.value(y).to_f64_vec())
            }
            None => None,
        };
        let next = next.into_iter().map(|v| tape.value(v).clone()).collect();
        Ok((next, emitted))
    }

    fn sample_chunk(
        &self,
        requests: &[ForecastRequest<'_>],
        num_samples: usize,
        seed: u64,
    ) -> Result<Vec<ForecastSampleSet>> {
        let cfg = &self.config;
        let (c, p, f) = (cfg.context_length, cfg.prediction_length, cfg.input_size());
        let n = requests.len();
        let scales: Vec<ScaleState> = requests
            .iter()
            .map(|r| ScaleState::from_context(cfg.domain, &r.series.values()[r.history_len - c..r.history_len]))
            .collect();
        let mut rngs: Vec<ChaCha8Rng> = requests
            .iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r.stream);
                rng
            })
            .collect();

        // Condition on the context with teacher forcing.
        let mut state = self.rnn.zero_state::<T>(n);
        for j in 0..c {
            let mut inputs = Vec::with_capacity(n * f);
            for (r, s) in requests.iter().zip(&scales) {
                let t = r.history_len - c + j;
                let y = r.series.values();
                inputs.extend(covariates(cfg.freq, r.series.start, t, r.history_len + p));
                inputs.push(if t == 0 { 0.0 } else { s.scale(y[t - 1]) });
            }
            state = self.run_eval_step(&state, &inputs, None)?.0;
        }

        // Fan out to trajectories and sample the horizon.
        let mut state: Vec<Tensor<T>> = state
            .iter()
            .map(|s| s.repeat_rows(num_samples))
            .collect::<Result<_>>()?;
        let rows = n * num_samples;
        let mut lag: Vec<f64> = requests
            .iter()
            .zip(&scales)
            .flat_map(|(r, s)| {
                let last = s.scale(r.series.values()[r.history_len - 1]);
                std::iter::repeat_n(last, num_samples)
            })
            .collect();
        let mut paths = vec![0.0; rows * p];
        for k in 0..p {
            let mut inputs = Vec::with_capacity(rows * f);
            for (i, r) in requests.iter().enumerate() {
                let cov = covariates(cfg.freq, r.series.start, r.history_len + k, r.history_len + p);
                for s in 0..num_samples {
                    inputs.extend(cov);
                    inputs.push(lag[i * num_samples + s]);
                }
            }
            let taus: Vec<f64> = rngs
                .iter_mut()
                .flat_map(|rng| (0..num_samples).map(|_| rng.random::<f64>()).collect::<Vec<_>>())
                .collect();
            let (next, emitted) = self.run_eval_step(&state, &inputs, Some(&taus))?;
            state = next;
            let emitted = emitted.expect("requested emission");
            for (row, &v) in emitted.iter().enumerate() {
                paths[row * p + k] = v;
            }
            lag = emitted;
        }

        requests
            .iter()
            .zip(&scales)
            .enumerate()
            .map(|(i, (r, s))| {
                let values: Vec<f64> = paths[i * num_samples * p..][..num_samples * p]
                    .iter()
                    .map(|&v| {
                        let v = s.unscale(v);
                        if cfg.domain == Domain::Count {
                            (v + 0.5).floor()
                        } else {
                            v
                        }
                    })
                    .collect();
                if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Numerical(format!("series `{}`: sampled value {v}", r.series.id)));
                }
                ForecastSampleSet::new(
                    r.series.id.clone(),
                    cfg.freq.timestamp(r.series.start, r.history_len),
                    cfg.freq,
                    num_samples,
                    p,
                    values,
                )
            })
            .collect()
    }

    /// Writes parameters with the JSON-encoded config as metadata.
    pub fn save<W: Write>(&self, out: W) -> Result<()> {
        let mut meta = Metadata::new();
        meta.insert("config".into(), serde_json::to_string(&self.config)?);
        write_checkpoint(&self.store, &meta, out)
    }

    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let ck = read_checkpoint::<T, _>(input)?;
        let config: ModelConfig = serde_json::from_str(
            ck.meta
                .get("config")
                .ok_or_else(|| Error::Checkpoint("checkpoint carries no config".into()))?,
        )
        .map_err(|e| Error::Checkpoint(format!("bad config metadata: {e}")))?;
        let mut model = Self::new(config)?;
        ck.restore_into(&mut model.store)?;
        Ok(model)
    }
}
