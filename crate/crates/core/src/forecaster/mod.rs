//! The IQN-RNN forecaster: configuration, covariates and scaling, training
//! with teacher forcing, and ancestral sampling.
//!
//! At each step `t` the GRU consumes `[X_t, y_{t−1}/ν]`, where `X_t` are
//! calendar and age covariates and `ν` is the window scale. The top-layer
//! state feeds the quantile head. Training draws a fresh `τ` for every
//! window and step; inference draws one per trajectory and step and feeds
//! the emitted value back.

mod config;
mod features;
mod model;
mod samples;

pub use config::ModelConfig;
pub use features::{covariates, ScaleState, NUM_COVARIATES};
pub use model::{ForecastRequest, IqnRnn, TrainReport, Window, WindowBatch};
pub use samples::{quantile_of_sorted, write_forecasts_csv, ForecastSampleSet};
