use std::io::Write;

use chrono::NaiveDateTime;

use crate::data::{format_timestamp, Freq};
use crate::error::{Error, Result};

/// Linear interpolation between order statistics at position `τ (n − 1)`.
///
/// `sorted` must be ascending and non-empty.
pub fn quantile_of_sorted(sorted: &[f64], tau: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = tau.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Sampled future trajectories for one series, `[num_samples x horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastSampleSet {
    pub series_id: String,
    /// Timestamp of the first forecast step.
    pub start: NaiveDateTime,
    pub freq: Freq,
    num_samples: usize,
    horizon: usize,
    values: Vec<f64>,
}

impl ForecastSampleSet {
    pub fn new(
        series_id: impl Into<String>,
        start: NaiveDateTime,
        freq: Freq,
        num_samples: usize,
        horizon: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if num_samples == 0 || horizon == 0 || values.len() != num_samples * horizon {
            return Err(Error::shape("sample set", &[num_samples, horizon], &[values.len()]));
        }
        Ok(Self {
            series_id: series_id.into(),
            start,
            freq,
            num_samples,
            horizon,
            values,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.num_samples, self.horizon]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.values[i * self.horizon..][..self.horizon]
    }

    pub fn column(&self, step: usize) -> Vec<f64> {
        self.values.iter().skip(step).step_by(self.horizon).copied().collect()
    }

    /// Ascending sample values at `step`.
    pub fn sorted_column(&self, step: usize) -> Vec<f64> {
        let mut c = self.column(step);
        c.sort_by(f64::total_cmp);
        c
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.horizon)
            .map(|s| self.column(s).iter().sum::<f64>() / self.num_samples as f64)
            .collect()
    }

    /// `[taus.len() x horizon]` empirical quantiles.
    ///
    /// `taus` must be ascending within `[0, 1]`; rows are then
    /// non-decreasing by construction.
    pub fn empirical_quantiles(&self, taus: &[f64]) -> Result<Vec<Vec<f64>>> {
        if taus.is_empty() {
            return Err(Error::Contract("no quantile levels requested".into()));
        }
        if let Some(t) = taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Domain(format!("quantile level {t} outside [0, 1]")));
        }
        if taus.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Contract("quantile levels must be ascending".into()));
        }
        let columns: Vec<Vec<f64>> = (0..self.horizon).map(|s| self.sorted_column(s)).collect();
        Ok(taus
            .iter()
            .map(|&t| columns.iter().map(|c| quantile_of_sorted(c, t)).collect())
            .collect())
    }
}

/// One row per sampled value: `series_id,sample,step,timestamp,value`.
pub fn write_forecasts_csv<W: Write>(forecasts: &[ForecastSampleSet], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series_id", "sample", "step", "timestamp", "value"])?;
    for f in forecasts {
        let stamps: Vec<String> = (0..f.horizon)
            .map(|s| format_timestamp(f.freq.timestamp(f.start, s)))
            .collect();
        for i in 0..f.num_samples {
            for (step, v) in f.sample(i).iter().enumerate() {
                w.write_record([
                    f.series_id.as_str(),
                    &i.to_string(),
                    &step.to_string(),
                    &stamps[step],
                    &v.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
