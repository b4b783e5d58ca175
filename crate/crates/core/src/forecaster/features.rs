use chrono::NaiveDateTime;

use crate::data::{Domain, Freq};

/// Covariates per step (excluding the lagged target).
pub const NUM_COVARIATES: usize = 3;

/// Time features for absolute index `t` of a series starting at `start`:
/// two calendar fractions followed by `ln(1 + t) / ln(1 + t_ref)`.
///
/// `t_ref` is one past the last index of the window being modelled, so
/// the age feature stays in `[0, 1)` inside the window.
pub fn covariates(freq: Freq, start: NaiveDateTime, t: usize, t_ref: usize) -> [f64; NUM_COVARIATES] {
    let [a, b] = freq.calendar_features(start, t);
    let age = (t as f64).ln_1p() / (t_ref.max(1) as f64).ln_1p();
    [a, b, age]
}

/// Per-window input scale `ν`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleState {
    nu: f64,
}

impl ScaleState {
    /// `ν = 1 + mean|context|` for positive and count data, `1` otherwise.
    pub fn from_context(domain: Domain, context: &[f64]) -> Self {
        let nu = if domain.uses_mean_scaling() && !context.is_empty() {
            1.0 + context.iter().map(|v| v.abs()).sum::<f64>() / context.len() as f64
        } else {
            1.0
        };
        Self { nu }
    }

    pub fn nu(self) -> f64 {
        self.nu
    }

    pub fn scale(self, v: f64) -> f64 {
        v / self.nu
    }

    pub fn unscale(self, v: f64) -> f64 {
        v * self.nu
    }
}
