use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{ItemScores, MetricAccumulator, MetricConfig, MetricsReport};
use crate::autodiff::Element;
use crate::data::{split, Dataset, TestWindow};
use crate::error::{Error, Result};
use crate::forecaster::{ForecastRequest, ForecastSampleSet, IqnRnn};

/// Anything that turns requests into sample sets.
pub trait Forecaster {
    /// One sample set per request, in request order, each with horizon
    /// `prediction_length`.
    fn forecast(
        &self,
        requests: &[ForecastRequest<'_>],
        prediction_length: usize,
        num_samples: usize,
        seed: u64,
    ) -> Result<Vec<ForecastSampleSet>>;
}

impl<T: Element> Forecaster for IqnRnn<T> {
    fn forecast(
        &self,
        requests: &[ForecastRequest<'_>],
        prediction_length: usize,
        num_samples: usize,
        seed: u64,
    ) -> Result<Vec<ForecastSampleSet>> {
        if prediction_length != self.config().prediction_length {
            return Err(Error::Config(format!(
                "model forecasts {} steps, evaluation needs {prediction_length}",
                self.config().prediction_length
            )));
        }
        self.sample_forecasts(requests, num_samples, seed)
    }
}

fn horizon_start(r: &ForecastRequest<'_>) -> chrono::NaiveDateTime {
    r.series.freq.timestamp(r.series.start, r.history_len)
}

/// Returns the realised future as every sample. Scores a perfect forecast.
#[derive(Clone, Copy, Debug, Default)]
pub struct Clairvoyant;

impl Forecaster for Clairvoyant {
    fn forecast(
        &self,
        requests: &[ForecastRequest<'_>],
        prediction_length: usize,
        num_samples: usize,
        _seed: u64,
    ) -> Result<Vec<ForecastSampleSet>> {
        requests
            .iter()
            .map(|r| {
                let future = r
                    .series
                    .values()
                    .get(r.history_len..r.history_len + prediction_length)
                    .ok_or_else(|| Error::Data(format!("series `{}` has no future to reveal", r.series.id)))?;
                let values = future
                    .iter()
                    .copied()
                    .cycle()
                    .take(num_samples * prediction_length)
                    .collect();
                ForecastSampleSet::new(
                    r.series.id.clone(),
                    horizon_start(r),
                    r.series.freq,
                    num_samples,
                    prediction_length,
                    values,
                )
            })
            .collect()
    }
}

/// Draws each step uniformly from past observations at the same seasonal
/// phase, looking back at most `seasons` periods.
#[derive(Clone, Copy, Debug)]
pub struct SeasonalNaiveSampler {
    pub seasonality: usize,
    pub seasons: usize,
}

impl Forecaster for SeasonalNaiveSampler {
    fn forecast(
        &self,
        requests: &[ForecastRequest<'_>],
        prediction_length: usize,
        num_samples: usize,
        seed: u64,
    ) -> Result<Vec<ForecastSampleSet>> {
        if self.seasonality == 0 || self.seasons == 0 {
            return Err(Error::Config("seasonality and seasons must be positive".into()));
        }
        let m = self.seasonality;
        requests
            .iter()
            .map(|r| {
                let hist = &r.series.values()[..r.history_len.min(r.series.len())];
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r.stream);
                let pools: Vec<Vec<f64>> = (0..prediction_length)
                    .map(|k| {
                        let target = r.history_len + k;
                        (1..)
                            .map(|j| target.checked_sub(j * m))
                            .take_while(|t| t.is_some())
                            .flatten()
                            .filter(|&t| t < hist.len())
                            .take(self.seasons)
                            .map(|t| hist[t])
                            .collect()
                    })
                    .collect();
                if pools.iter().any(Vec::is_empty) {
                    return Err(Error::Data(format!(
                        "series `{}` has no history at the required seasonal phase",
                        r.series.id
                    )));
                }
                let mut values = Vec::with_capacity(num_samples * prediction_length);
                for _ in 0..num_samples {
                    values.extend(pools.iter().map(|p| p[rng.random_range(0..p.len())]));
                }
                ForecastSampleSet::new(
                    r.series.id.clone(),
                    horizon_start(r),
                    r.series.freq,
                    num_samples,
                    prediction_length,
                    values,
                )
            })
            .collect()
    }
}

/// Scores of one forecast window.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemRecord {
    pub window: TestWindow,
    pub series_id: String,
    pub scores: ItemScores,
}

#[derive(Clone, Debug)]
pub struct BacktestResult {
    pub report: MetricsReport,
    pub items: Vec<ItemRecord>,
    /// In the order of `items`.
    pub forecasts: Vec<ForecastSampleSet>,
}

/// Forecasts the last `windows` non-overlapping horizons of every series
/// in `dataset`, each conditioned on everything before it, and scores them.
///
/// Request `i` uses random stream `i`, so results are independent of how
/// the forecaster batches its work.
pub fn backtest<F: Forecaster + ?Sized>(
    forecaster: &F,
    dataset: &Dataset,
    windows: usize,
    num_samples: usize,
    seed: u64,
    metrics: &MetricConfig,
) -> Result<BacktestResult> {
    let plan = split(dataset, windows)?;
    let pred = dataset.prediction_length;
    let requests: Vec<ForecastRequest<'_>> = plan
        .test
        .iter()
        .zip(0u64..)
        .map(|(w, stream)| ForecastRequest {
            series: &dataset.series()[w.series_index],
            history_len: w.history_len,
            stream,
        })
        .collect();
    let forecasts = forecaster.forecast(&requests, pred, num_samples, seed)?;
    if forecasts.len() != requests.len() {
        return Err(Error::Contract(format!(
            "forecaster returned {} sample sets for {} requests",
            forecasts.len(),
            requests.len()
        )));
    }
    let mut acc = MetricAccumulator::new(metrics.clone());
    let mut items = Vec::with_capacity(forecasts.len());
    for ((w, r), f) in plan.test.iter().zip(&requests).zip(&forecasts) {
        let values = r.series.values();
        let scores = acc.push(f, &values[w.horizon(pred)], &values[..w.history_len])?;
        items.push(ItemRecord {
            window: *w,
            series_id: r.series.id.clone(),
            scores,
        });
    }
    Ok(BacktestResult {
        report: acc.finish()?,
        items,
        forecasts,
    })
}

/// Quantiles of every sampled value across all sample sets and steps.
pub fn pooled_quantiles(forecasts: &[ForecastSampleSet], taus: &[f64]) -> Result<Vec<f64>> {
    let mut all: Vec<f64> = forecasts.iter().flat_map(|f| f.values().iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::EmptyDataset("no samples to pool".into()));
    }
    all.sort_by(f64::total_cmp);
    let pooled = ForecastSampleSet::new("pooled", forecasts[0].start, forecasts[0].freq, all.len(), 1, all)?;
    Ok(pooled
        .empirical_quantiles(taus)?
        .into_iter()
        .map(|row| row[0])
        .collect())
}
