use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecaster::{quantile_of_sorted, ForecastSampleSet};
use crate::iqn::quantile_loss;

/// `τ ∈ {0.05, 0.10, …, 0.95}`.
pub fn default_quantile_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

/// Settings shared by all metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Levels whose weighted quantile losses are averaged into the CRPS.
    pub quantile_grid: Vec<f64>,
    /// MSIS scores the central `1 − alpha` interval.
    pub alpha: f64,
    /// Seasonal period `m` of the naive scale used by MASE and MSIS.
    pub seasonality: usize,
}

impl MetricConfig {
    pub fn new(seasonality: usize) -> Self {
        Self {
            quantile_grid: default_quantile_grid(),
            alpha: 0.05,
            seasonality,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.quantile_grid.is_empty() || self.quantile_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config("quantile grid must be non-empty within [0, 1]".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.seasonality == 0 {
            return Err(Error::Config("seasonality must be at least 1".into()));
        }
        Ok(())
    }
}

/// In-sample MAE of the forecast `y_{t−m}`.
pub fn seasonal_naive_mae(in_sample: &[f64], m: usize) -> Result<f64> {
    if m == 0 || in_sample.len() <= m {
        return Err(Error::Data(format!(
            "seasonal scale needs more than m = {m} in-sample points, got {}",
            in_sample.len()
        )));
    }
    let diffs = in_sample.len() - m;
    Ok(in_sample.windows(m + 1).map(|w| (w[m] - w[0]).abs()).sum::<f64>() / diffs as f64)
}

/// `Ê|X − y| − ½ Ê|X − X′|` over all ordered sample pairs (including
/// `X = X′`), computed from the ascending sample in `O(n)`.
pub fn energy_score(sorted: &[f64], y: f64) -> f64 {
    let n = sorted.len() as f64;
    let e_abs = sorted.iter().map(|x| (x - y).abs()).sum::<f64>() / n;
    // Σ_k x_(k) (2k − n − 1) / n² equals ½ Ê|X − X′|.
    let half_spread = sorted
        .iter()
        .enumerate()
        .map(|(k, x)| x * (2.0 * (k as f64 + 1.0) - n - 1.0))
        .sum::<f64>()
        / (n * n);
    e_abs - half_spread
}

/// Sums and per-item scores for one forecast against its actuals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub num_points: usize,
    pub sum_abs_y: f64,
    /// `Σ L_τ` for each grid level, in grid order.
    pub grid_loss: Vec<f64>,
    pub loss50: f64,
    pub loss90: f64,
    /// `Σ (Ê|X − y| − ½ Ê|X − X′|)`; `None` with fewer than two samples.
    pub energy: Option<f64>,
    /// `Σ (y − mean forecast)²`.
    pub sq_err: f64,
    /// Mean sMAPE term over the horizon.
    pub smape: f64,
    /// `None` when the seasonal-naive scale is zero.
    pub mase: Option<f64>,
    pub msis: Option<f64>,
}

impl ItemScores {
    pub fn compute(
        cfg: &MetricConfig,
        forecast: &ForecastSampleSet,
        actual: &[f64],
        in_sample: &[f64],
    ) -> Result<Self> {
        cfg.validate()?;
        let h = forecast.horizon();
        if actual.len() != h {
            return Err(Error::shape("actuals", &[actual.len()], &forecast.shape()));
        }
        let scale = seasonal_naive_mae(in_sample, cfg.seasonality)?;
        let (lo_tau, hi_tau) = (cfg.alpha / 2.0, 1.0 - cfg.alpha / 2.0);
        let mut s = Self {
            num_points: h,
            sum_abs_y: 0.0,
            grid_loss: vec![0.0; cfg.quantile_grid.len()],
            loss50: 0.0,
            loss90: 0.0,
            energy: (forecast.num_samples() >= 2).then_some(0.0),
            sq_err: 0.0,
            smape: 0.0,
            mase: None,
            msis: None,
        };
        let means = forecast.mean();
        let (mut abs_err, mut interval) = (0.0, 0.0);
        for (step, &y) in actual.iter().enumerate() {
            let col = forecast.sorted_column(step);
            let q = |t: f64| quantile_of_sorted(&col, t);
            s.sum_abs_y += y.abs();
            for (acc, &t) in s.grid_loss.iter_mut().zip(&cfg.quantile_grid) {
                *acc += quantile_loss(t, y, q(t));
            }
            let median = q(0.5);
            s.loss50 += quantile_loss(0.5, y, median);
            s.loss90 += quantile_loss(0.9, y, q(0.9));
            if let Some(e) = s.energy.as_mut() {
                *e += energy_score(&col, y);
            }
            s.sq_err += (y - means[step]).powi(2);
            let denom = y.abs() + median.abs();
            if denom > 0.0 {
                s.smape += 2.0 * (y - median).abs() / denom;
            }
            abs_err += (y - median).abs();
            let (l, u) = (q(lo_tau), q(hi_tau));
            interval += (u - l) + (2.0 / cfg.alpha) * (l - y).max(0.0) + (2.0 / cfg.alpha) * (y - u).max(0.0);
        }
        let hf = h as f64;
        s.smape /= hf;
        if scale > 0.0 {
            s.mase = Some(abs_err / hf / scale);
            s.msis = Some(interval / hf / scale);
        }
        Ok(s)
    }
}

/// Dataset-level metrics.
///
/// Quantile losses, CRPS and NRMSE pool sums over all points before
/// normalising by `Σ|y|`; sMAPE, MASE and MSIS average per-item scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub crps: f64,
    pub ql50: f64,
    pub ql90: f64,
    pub msis: f64,
    pub nrmse: f64,
    pub smape: f64,
    pub mase: f64,
    /// Sample-based CRPS estimate, same normalisation as `crps`.
    pub crps_energy: Option<f64>,
    pub num_items: usize,
    pub num_points: usize,
    /// Items left out of MASE and MSIS because their naive scale is zero.
    pub skipped_scale_items: usize,
    pub seasonality: usize,
    pub alpha: f64,
}

impl MetricsReport {
    /// `(name, value)` pairs in a fixed order, for flat text output.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("crps", self.crps.to_string()),
            ("ql50", self.ql50.to_string()),
            ("ql90", self.ql90.to_string()),
            ("msis", self.msis.to_string()),
            ("nrmse", self.nrmse.to_string()),
            ("smape", self.smape.to_string()),
            ("mase", self.mase.to_string()),
        ];
        if let Some(e) = self.crps_energy {
            v.push(("crps_energy", e.to_string()));
        }
        v.extend([
            ("num_items", self.num_items.to_string()),
            ("num_points", self.num_points.to_string()),
            ("skipped_scale_items", self.skipped_scale_items.to_string()),
            ("seasonality", self.seasonality.to_string()),
            ("alpha", self.alpha.to_string()),
        ]);
        v
    }
}

/// Mergeable running sums over items; merging partitions gives the same
/// report as accumulating their union.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricAccumulator {
    cfg: MetricConfig,
    num_items: usize,
    num_points: usize,
    sum_abs_y: f64,
    grid_loss: Vec<f64>,
    loss50: f64,
    loss90: f64,
    energy: Option<f64>,
    sq_err: f64,
    smape: f64,
    mase: f64,
    msis: f64,
    scaled_items: usize,
}

impl MetricAccumulator {
    pub fn new(cfg: MetricConfig) -> Self {
        let n = cfg.quantile_grid.len();
        Self {
            cfg,
            num_items: 0,
            num_points: 0,
            sum_abs_y: 0.0,
            grid_loss: vec![0.0; n],
            loss50: 0.0,
            loss90: 0.0,
            energy: Some(0.0),
            sq_err: 0.0,
            smape: 0.0,
            mase: 0.0,
            msis: 0.0,
            scaled_items: 0,
        }
    }

    pub fn config(&self) -> &MetricConfig {
        &self.cfg
    }

    /// Scores one forecast and adds it.
    pub fn push(&mut self, forecast: &ForecastSampleSet, actual: &[f64], in_sample: &[f64]) -> Result<ItemScores> {
        let s = ItemScores::compute(&self.cfg, forecast, actual, in_sample)?;
        self.add(&s);
        Ok(s)
    }

    pub fn add(&mut self, s: &ItemScores) {
        self.num_items += 1;
        self.num_points += s.num_points;
        self.sum_abs_y += s.sum_abs_y;
        for (a, b) in self.grid_loss.iter_mut().zip(&s.grid_loss) {
            *a += b;
        }
        self.loss50 += s.loss50;
        self.loss90 += s.loss90;
        self.energy = self.energy.zip(s.energy).map(|(a, b)| a + b);
        self.sq_err += s.sq_err;
        self.smape += s.smape;
        if let (Some(mase), Some(msis)) = (s.mase, s.msis) {
            self.mase += mase;
            self.msis += msis;
            self.scaled_items += 1;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.num_items += other.num_items;
        self.num_points += other.num_points;
        self.sum_abs_y += other.sum_abs_y;
        for (a, b) in self.grid_loss.iter_mut().zip(&other.grid_loss) {
            *a += b;
        }
        self.loss50 += other.loss50;
        self.loss90 += other.loss90;
        self.energy = self.energy.zip(other.energy).map(|(a, b)| a + b);
        self.sq_err += other.sq_err;
        self.smape += other.smape;
        self.mase += other.mase;
        self.msis += other.msis;
        self.scaled_items += other.scaled_items;
    }

    pub fn finish(&self) -> Result<MetricsReport> {
        if self.num_items == 0 {
            return Err(Error::EmptyDataset("no forecasts to score".into()));
        }
        if !(self.sum_abs_y > 0.0) {
            return Err(Error::Numerical(
                "Σ|y| over the evaluation points is zero; weighted metrics are undefined".into(),
            ));
        }
        let skipped = self.num_items - self.scaled_items;
        if skipped > 0 {
            log::warn!("{skipped} forecast items have a zero seasonal-naive scale; left out of MASE and MSIS");
        }
        if self.scaled_items == 0 {
            return Err(Error::Numerical(
                "every item has a zero seasonal-naive scale; MASE and MSIS are undefined".into(),
            ));
        }
        let weighted = |sum: f64| 2.0 * sum / self.sum_abs_y;
        let n = self.num_points as f64;
        let scaled = self.scaled_items as f64;
        Ok(MetricsReport {
            crps: self.grid_loss.iter().map(|&l| weighted(l)).sum::<f64>() / self.grid_loss.len() as f64,
            ql50: weighted(self.loss50),
            ql90: weighted(self.loss90),
            msis: self.msis / scaled,
            nrmse: (self.sq_err / n).sqrt() / (self.sum_abs_y / n),
            smape: self.smape / self.num_items as f64,
            mase: self.mase / scaled,
            crps_energy: self.energy.map(|e| e / self.sum_abs_y),
            num_items: self.num_items,
            num_points: self.num_points,
            skipped_scale_items: skipped,
            seasonality: self.cfg.seasonality,
            alpha: self.cfg.alpha,
        })
    }
}

fn check_aligned<A: AsRef<[f64]>>(forecasts: &[ForecastSampleSet], actuals: &[A]) -> Result<f64> {
    if forecasts.len() != actuals.len() || forecasts.is_empty() {
        return Err(Error::shape(
            "forecasts vs actuals",
            &[forecasts.len()],
            &[actuals.len()],
        ));
    }
    for (f, a) in forecasts.iter().zip(actuals) {
        if f.horizon() != a.as_ref().len() {
            return Err(Error::shape("forecast vs actual", &f.shape(), &[a.as_ref().len()]));
        }
    }
    let total: f64 = actuals.iter().flat_map(|a| a.as_ref().iter()).map(|y| y.abs()).sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("Σ|y| is zero; weighted metrics are undefined".into()));
    }
    Ok(total)
}

/// `2 Σ L_τ(y, Q̂(τ)) / Σ|y|` with `Q̂` the empirical quantile of each column.
pub fn weighted_quantile_loss<A: AsRef<[f64]>>(
    forecasts: &[ForecastSampleSet],
    actuals: &[A],
    tau: f64,
) -> Result<f64> {
    let total = check_aligned(forecasts, actuals)?;
    let mut loss = 0.0;
    for (f, a) in forecasts.iter().zip(actuals) {
        let q = f.empirical_quantiles(&[tau])?;
        loss += a
            .as_ref()
            .iter()
            .zip(&q[0])
            .map(|(&y, &qh)| quantile_loss(tau, y, qh))
            .sum::<f64>();
    }
    Ok(2.0 * loss / total)
}

#[derive(Clone, Debug, PartialEq)]
pub enum CrpsMethod {
    /// Mean weighted quantile loss over the given levels.
    QuantileGrid(Vec<f64>),
    /// Energy form from the samples, normalised by `Σ|y|`.
    SampleEnergy,
}

impl Default for CrpsMethod {
    fn default() -> Self {
        Self::QuantileGrid(default_quantile_grid())
    }
}

pub fn crps<A: AsRef<[f64]>>(forecasts: &[ForecastSampleSet], actuals: &[A], method: &CrpsMethod) -> Result<f64> {
    let total = check_aligned(forecasts, actuals)?;
    match method {
        CrpsMethod::QuantileGrid(grid) => {
            if grid.is_empty() {
                return Err(Error::Config("empty quantile grid".into()));
            }
            let mut sum = 0.0;
            for &t in grid {
                sum += weighted_quantile_loss(forecasts, actuals, t)?;
            }
            Ok(sum / grid.len() as f64)
        }
        CrpsMethod::SampleEnergy => {
            if let Some(f) = forecasts.iter().find(|f| f.num_samples() < 2) {
                return Err(Error::Contract(format!(
                    "sample CRPS needs at least 2 samples, `{}` has {}",
                    f.series_id,
                    f.num_samples()
                )));
            }
            let mut sum = 0.0;
            for (f, a) in forecasts.iter().zip(actuals) {
                for (step, &y) in a.as_ref().iter().enumerate() {
                    sum += energy_score(&f.sorted_column(step), y);
                }
            }
            Ok(sum / total)
        }
    }
}

fn item_average<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    forecasts: &[ForecastSampleSet],
    actuals: &[A],
    in_sample: &[B],
    cfg: &MetricConfig,
    pick: impl Fn(&ItemScores) -> Option<f64>,
) -> Result<f64> {
    if in_sample.len() != forecasts.len() {
        return Err(Error::shape(
            "in-sample vs forecasts",
            &[in_sample.len()],
            &[forecasts.len()],
        ));
    }
    check_aligned(forecasts, actuals)?;
    let mut values = Vec::with_capacity(forecasts.len());
    for ((f, a), h) in forecasts.iter().zip(actuals).zip(in_sample) {
        let s = ItemScores::compute(cfg, f, a.as_ref(), h.as_ref())?;
        match pick(&s) {
            Some(v) => values.push(v),
            None => log::warn!("`{}`: zero seasonal-naive scale; item skipped", f.series_id),
        }
    }
    if values.is_empty() {
        return Err(Error::Numerical("no item has a non-zero seasonal-naive scale".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean scaled interval score of the central `1 − alpha` interval.
pub fn msis<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    forecasts: &[ForecastSampleSet],
    actuals: &[A],
    in_sample: &[B],
    alpha: f64,
    m: usize,
) -> Result<f64> {
    let cfg = MetricConfig {
        alpha,
        ..MetricConfig::new(m)
    };
    item_average(forecasts, actuals, in_sample, &cfg, |s| s.msis)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub nrmse: f64,
    pub smape: f64,
    pub mase: f64,
}

/// NRMSE of the sample mean; sMAPE and MASE of the sample median.
pub fn point_metrics<A: AsRef<[f64]>, B: AsRef<[f64]>>(
    forecasts: &[ForecastSampleSet],
    actuals: &[A],
    in_sample: &[B],
    m: usize,
) -> Result<PointMetrics> {
    let cfg = MetricConfig::new(m);
    let mase = item_average(forecasts, actuals, in_sample, &cfg, |s| s.mase)?;
    let smape = item_average(forecasts, actuals, in_sample, &cfg, |s| Some(s.smape))?;
    let total = check_aligned(forecasts, actuals)?;
    let (mut sq, mut n) = (0.0, 0usize);
    for (f, a) in forecasts.iter().zip(actuals) {
        for (y, mu) in a.as_ref().iter().zip(f.mean()) {
            sq += (y - mu).powi(2);
            n += 1;
        }
    }
    let nf = n as f64;
    Ok(PointMetrics {
        nrmse: (sq / nf).sqrt() / (total / nf),
        smape,
        mase,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_timestamp, Freq};

    fn fs(samples: Vec<Vec<f64>>) -> ForecastSampleSet {
        let n = samples.len();
        let h = samples[0].len();
        ForecastSampleSet::new(
            "x",
            parse_timestamp("2020-01-01").unwrap(),
            Freq::Daily,
            n,
            h,
            samples.into_iter().flatten().collect(),
        )
        .unwrap()
    }

    fn constant(v: f64, n: usize, h: usize) -> ForecastSampleSet {
        fs(vec![vec![v; h]; n])
    }

    #[test]
    fn weighted_quantile_loss_examples() {
        let y = [vec![10.0]];
        assert!((weighted_quantile_loss(&[constant(0.0, 5, 1)], &y, 0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((weighted_quantile_loss(&[constant(20.0, 5, 1)], &y, 0.9).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(weighted_quantile_loss(&[constant(10.0, 5, 1)], &y, 0.3).unwrap(), 0.0);
        assert!(weighted_quantile_loss(&[constant(1.0, 5, 1)], &[vec![0.0]], 0.5).is_err());
    }

    #[test]
    fn energy_example_uses_all_ordered_pairs() {
        let mut samples = vec![vec![0.0]; 50];
        samples.extend(vec![vec![1.0]; 50]);
        let col = fs(samples).sorted_column(0);
        assert!((energy_score(&col, 0.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn degenerate_forecasts_score_zero() {
        let y = [vec![3.0, 4.0]];
        let f = [fs(vec![vec![3.0, 4.0]; 10])];
        assert_eq!(crps(&f, &y, &CrpsMethod::default()).unwrap(), 0.0);
        assert_eq!(crps(&f, &y, &CrpsMethod::SampleEnergy).unwrap(), 0.0);
        assert!(crps(&[constant(3.0, 1, 2)], &y, &CrpsMethod::SampleEnergy).is_err());
    }

    #[test]
    fn msis_examples() {
        let hist = [vec![0.0, 1.0, 0.0, 1.0]]; // naive MAE (m = 1) = 1
                                               // 100 samples 0..=99 / 99 * 10: L = 0.25, U = 9.75 at α = 0.05.
        let wide = fs((0..100).map(|i| vec![i as f64 * 10.0 / 99.0]).collect());
        let inside = msis(std::slice::from_ref(&wide), &[vec![5.0]], &hist, 0.05, 1).unwrap();
        assert!((inside - 9.5).abs() < 1e-12, "{inside}");
        let below = msis(&[wide], &[vec![0.25 - 0.5]], &hist, 0.05, 1).unwrap();
        assert!((below - (9.5 + 40.0 * 0.5)).abs() < 1e-12, "{below}");
        assert_eq!(msis(&[constant(2.0, 3, 1)], &[vec![2.0]], &hist, 0.05, 1).unwrap(), 0.0);
        assert!(msis(&[constant(2.0, 3, 1)], &[vec![2.0]], &[vec![1.0, 1.0]], 0.05, 1).is_err());
    }

    #[test]
    fn point_metric_examples() {
        let p = point_metrics(&[constant(7.0, 4, 1)], &[vec![7.0]], &[vec![1.0, 2.0]], 1).unwrap();
        assert_eq!((p.nrmse, p.smape, p.mase), (0.0, 0.0, 0.0));
        let p = point_metrics(&[constant(50.0, 4, 1)], &[vec![100.0]], &[vec![1.0, 2.0]], 1).unwrap();
        assert!((p.smape - 2.0 / 3.0).abs() < 1e-15);
        let f = fs(vec![vec![1.5, 2.5]; 3]);
        let p = point_metrics(&[f], &[vec![1.0, 3.0]], &[vec![1.0, 2.0, 3.0, 4.0]], 1).unwrap();
        assert!((p.mase - 0.5).abs() < 1e-15);
        let p = point_metrics(&[constant(0.0, 2, 1)], &[vec![1.0]], &[vec![1.0, 2.0]], 1).unwrap();
        assert_eq!(p.smape, 2.0);
    }

    #[test]
    fn accumulator_matches_the_standalone_functions() {
        let f = vec![
            fs(vec![vec![1.0, 2.0], vec![2.0, 5.0], vec![0.5, 3.0]]),
            fs(vec![vec![4.0, 1.0], vec![3.0, 2.0], vec![6.0, 0.0]]),
        ];
        let y = vec![vec![1.5, 3.0], vec![5.0, 0.5]];
        let hist = vec![vec![1.0, 2.0, 0.0, 3.0], vec![2.0, 2.5, 4.0, 3.0]];
        let cfg = MetricConfig::new(1);
        let mut acc = MetricAccumulator::new(cfg.clone());
        for i in 0..2 {
            acc.push(&f[i], &y[i], &hist[i]).unwrap();
        }
        let r = acc.finish().unwrap();
        let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        close(r.crps, crps(&f, &y, &CrpsMethod::default()).unwrap());
        close(r.crps_energy.unwrap(), crps(&f, &y, &CrpsMethod::SampleEnergy).unwrap());
        close(r.ql50, weighted_quantile_loss(&f, &y, 0.5).unwrap());
        close(r.ql90, weighted_quantile_loss(&f, &y, 0.9).unwrap());
        close(r.msis, msis(&f, &y, &hist, 0.05, 1).unwrap());
        let p = point_metrics(&f, &y, &hist, 1).unwrap();
        close(r.nrmse, p.nrmse);
        close(r.smape, p.smape);
        close(r.mase, p.mase);
    }

    #[test]
    fn zero_scale_items_are_skipped() {
        let mut acc = MetricAccumulator::new(MetricConfig::new(1));
        acc.push(&constant(1.0, 2, 1), &[2.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!(acc.finish().is_err());
        acc.push(&constant(1.0, 2, 1), &[2.0], &[1.0, 2.0]).unwrap();
        let r = acc.finish().unwrap();
        assert_eq!((r.skipped_scale_items, r.num_items), (1, 2));
        assert_eq!(r.mase, 1.0);
    }
}
