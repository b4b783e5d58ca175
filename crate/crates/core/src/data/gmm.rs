//! IID Gaussian-mixture series and the exact mixture quantile function.

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::series::{Dataset, Domain, Freq, TimeSeries};
use crate::error::{Error, Result};

/// Mixture parameters and dataset size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmSpec {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub num_series: usize,
    pub length: usize,
}

impl Default for GmmSpec {
    /// Three components at −3, 0, 3 with weights .3/.4/.3 and σ = 0.4;
    /// 10,000 series of 48 points.
    fn default() -> Self {
        Self {
            weights: vec![0.3, 0.4, 0.3],
            means: vec![-3.0, 0.0, 3.0],
            stds: vec![0.4, 0.4, 0.4],
            num_series: 10_000,
            length: 48,
        }
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl GmmSpec {
    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.stds.len() != k {
            return Err(Error::Config(
                "mixture weights, means and stds must have equal, non-zero length".into(),
            ));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("mixture weights must be non-negative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
        }
        if self.stds.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::Config("mixture stds must be positive".into()));
        }
        if self.num_series == 0 || self.length == 0 {
            return Err(Error::Config("GMM dataset needs at least one point".into()));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let second: f64 = self
            .weights
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(w, (m, s))| w * (s * s + m * m))
            .sum();
        second - self.mean().powi(2)
    }

    /// Mixture CDF `Σ πₖ Φ((x − μₖ)/σₖ)`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(w, (m, s))| w * std_normal_cdf((x - m) / s))
            .sum()
    }
}

/// Draws `num_series` IID mixture series (daily, domain ℝ).
///
/// The returned dataset uses a two-step prediction length; override with
/// [`Dataset::new`] when a different horizon is wanted.
pub fn generate_gmm(spec: &GmmSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normals: Vec<Normal<f64>> = spec
        .means
        .iter()
        .zip(&spec.stds)
        .map(|(&m, &s)| Normal::new(m, s).expect("validated std"))
        .collect();
    let cumulative: Vec<f64> = spec
        .weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w;
            Some(*acc)
        })
        .collect();
    let start = NaiveDate::from_ymd_opt(2021, 1, 1)
        .expect("valid date")
        .and_hms_opt(0, 0, 0)
        .expect("valid time");
    let mut series = Vec::with_capacity(spec.num_series);
    for i in 0..spec.num_series {
        let values = (0..spec.length)
            .map(|_| {
                let u: f64 = rng.random();
                let k = cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1);
                normals[k].sample(&mut rng)
            })
            .collect();
        series.push(TimeSeries::new(
            format!("gmm-{i}"),
            start,
            Freq::Daily,
            Domain::Real,
            values,
        )?);
    }
    Dataset::new("gmm", Freq::Daily, Domain::Real, 2, series)
}

/// Inverts the mixture CDF by bisection to absolute tolerance `1e-8`.
pub fn gmm_true_quantile(spec: &GmmSpec, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("quantile level {tau} outside (0, 1)")));
    }
    spec.validate()?;
    let spread = spec.stds.iter().cloned().fold(0.0, f64::max) * 40.0;
    let lo_mean = spec.means.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_mean = spec.means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (lo_mean - spread, hi_mean + spread);
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if spec.cdf(mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
