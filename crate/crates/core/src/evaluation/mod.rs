//! Scoring probabilistic forecasts.
//!
//! Forecasts are sample sets; quantiles are read off by linear
//! interpolation between order statistics. CRPS is the mean weighted
//! quantile loss over a level grid (the sample energy form is reported
//! alongside). MASE and MSIS divide by the in-sample seasonal-naive MAE.
//!
//! ```
//! use iqn_rnn::data::{parse_timestamp, Freq};
//! use iqn_rnn::evaluation::{crps, CrpsMethod};
//! use iqn_rnn::forecaster::ForecastSampleSet;
//!
//! let start = parse_timestamp("2024-01-01").unwrap();
//! let f = ForecastSampleSet::new("a", start, Freq::Daily, 4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
//! let score = crps(&[f], &[vec![2.5]], &CrpsMethod::SampleEnergy).unwrap();
//! // Ê|X − y| = 1, ½ Ê|X − X′| = 0.625 over all 16 ordered pairs.
//! assert!((score - 0.375 / 2.5).abs() < 1e-12);
//! ```

mod backtest;
mod metrics;
mod report;

pub use backtest::{
    backtest, pooled_quantiles, BacktestResult, Clairvoyant, Forecaster, ItemRecord, SeasonalNaiveSampler,
};
pub use metrics::{
    crps, default_quantile_grid, energy_score, msis, point_metrics, seasonal_naive_mae, weighted_quantile_loss,
    CrpsMethod, ItemScores, MetricAccumulator, MetricConfig, MetricsReport, PointMetrics,
};
pub use report::{read_report_text, write_item_csv, write_report_json, write_report_text};
