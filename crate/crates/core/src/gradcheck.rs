//! Finite-difference verification of the training loss gradient.
//!
//! A miniature forecaster in `f64` is built over a fixed batch of windows
//! and quantile levels. Every parameter scalar is nudged by `±h`, and the
//! central difference of the loss is compared with the gradient from the
//! tape.
//!
//! ```
//! use iqn_rnn::gradcheck::{gradient_check, GradCheckConfig};
//!
//! let report = gradient_check(&GradCheckConfig::default()).unwrap();
//! assert!(report.passed(), "{report}");
//! ```

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::data::{parse_timestamp, Domain, Freq, TimeSeries};
use crate::error::{Error, Result};
use crate::forecaster::{IqnRnn, ModelConfig, Window, WindowBatch};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub n_cos: usize,
    pub context_length: usize,
    pub prediction_length: usize,
    pub batch: usize,
    pub domain: Domain,
    pub seed: u64,
    /// Finite-difference step.
    pub step: f64,
    pub rel_tol: f64,
    /// Scalars whose gradient magnitude is below this are compared by
    /// absolute error instead. Central differences carry round-off of
    /// about `ε·|loss|/step` (~1e-12 here), which swamps the relative error
    /// of gradients much smaller than this floor.
    pub abs_tol: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            hidden_size: 8,
            num_layers: 1,
            n_cos: 8,
            context_length: 4,
            prediction_length: 2,
            batch: 3,
            domain: Domain::Positive,
            seed: 7,
            step: 1e-5,
            rel_tol: 1e-4,
            abs_tol: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl ScalarCheck {
    pub fn abs_error(&self) -> f64 {
        (self.analytic - self.numeric).abs()
    }

    pub fn magnitude(&self) -> f64 {
        self.analytic.abs().max(self.numeric.abs())
    }

    /// `|a − n| / max(|a|, |n|)`, zero when both vanish.
    pub fn rel_error(&self) -> f64 {
        let scale = self.magnitude();
        if scale == 0.0 {
            0.0
        } else {
            self.abs_error() / scale
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub loss: f64,
    /// Largest relative error among scalars with gradient magnitude of at
    /// least `abs_tol`.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Scalars failing both tolerances.
    pub failures: Vec<ScalarCheck>,
    pub elapsed: Duration,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} scalars, loss {:.6}, max rel error {:.3e}, max abs error {:.3e}, {} failures, {:.2?}",
            self.checked,
            self.loss,
            self.max_rel_error,
            self.max_abs_error,
            self.failures.len(),
            self.elapsed
        )?;
        for c in self.failures.iter().take(5) {
            write!(
                f,
                "\n  {}[{}]: analytic {:.6e}, numeric {:.6e}",
                c.param, c.index, c.analytic, c.numeric
            )?;
        }
        Ok(())
    }
}

/// Model, its series, and one row of quantile levels per step.
type Fixture = (IqnRnn<f64>, Vec<TimeSeries>, Vec<Vec<f64>>);

fn fixture(cfg: &GradCheckConfig) -> Result<Fixture> {
    let mut mc = ModelConfig::new(cfg.prediction_length, cfg.domain, Freq::Daily);
    mc.hidden_size = cfg.hidden_size;
    mc.num_layers = cfg.num_layers;
    mc.n_cos = cfg.n_cos;
    mc.context_length = cfg.context_length;
    mc.dropout = 0.0;
    mc.seed = cfg.seed;
    let mut model = IqnRnn::<f64>::new(mc)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    // Move biases off zero so no unit sits at a special point.
    let ids: Vec<_> = model.params().ids().collect();
    for id in ids {
        for v in model.params_mut().get_mut(id).data_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }

    let start = parse_timestamp("2021-03-01")?;
    let len = model.config().window_length() + 3;
    let (lo, hi) = match cfg.domain {
        Domain::UnitInterval => (0.05, 0.95),
        Domain::Real => (-3.0, 3.0),
        _ => (0.5, 5.0),
    };
    let series = (0..cfg.batch)
        .map(|i| {
            let mut v: Vec<f64> = (0..len).map(|_| rng.random_range(lo..hi)).collect();
            if cfg.domain == Domain::Count {
                v.iter_mut().for_each(|x| *x = x.round());
            }
            TimeSeries::new(format!("g{i}"), start, Freq::Daily, cfg.domain, v)
        })
        .collect::<Result<Vec<_>>>()?;
    let steps = model.config().window_length();
    let taus = (0..steps)
        .map(|_| (0..cfg.batch).map(|_| rng.random_range(0.02..0.98)).collect())
        .collect();
    Ok((model, series, taus))
}

/// Checks every parameter scalar of a miniature model.
pub fn gradient_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    if !(cfg.step > 0.0) || cfg.batch == 0 {
        return Err(Error::Config("gradient check needs a positive step and batch".into()));
    }
    let began = Instant::now();
    let (mut model, series, taus) = fixture(cfg)?;
    let windows: Vec<Window<'_>> = series
        .iter()
        .enumerate()
        .map(|(i, s)| Window {
            series: s,
            start: i % 3,
        })
        .collect();
    let batch = WindowBatch::new(model.config(), &windows)?;

    let loss_of = |m: &IqnRnn<f64>| -> Result<f64> {
        let mut tape = Tape::no_grad();
        let l = m.loss_on_tape(&mut tape, &batch, &taus, None::<&mut ChaCha8Rng>)?;
        tape.value(l).item()
    };

    let mut tape = Tape::new();
    let l = model.loss_on_tape(&mut tape, &batch, &taus, None::<&mut ChaCha8Rng>)?;
    let loss = tape.value(l).item()?;
    model.params_mut().zero_grad();
    tape.backward(l)?.accumulate_into(&tape, model.params_mut())?;

    let ids: Vec<_> = model.params().ids().collect();
    let mut report = GradCheckReport {
        checked: 0,
        loss,
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        failures: Vec::new(),
        elapsed: Duration::ZERO,
    };
    for id in ids {
        let name = model.params().name(id).to_string();
        let analytic: Vec<f64> = match model.params().get(id).grad() {
            Some(g) => g.to_vec(),
            None => return Err(Error::Contract(format!("parameter `{name}` received no gradient"))),
        };
        for (index, &a) in analytic.iter().enumerate() {
            let orig = model.params().get(id).data()[index];
            model.params_mut().get_mut(id).data_mut()[index] = orig + cfg.step;
            let up = loss_of(&model)?;
            model.params_mut().get_mut(id).data_mut()[index] = orig - cfg.step;
            let down = loss_of(&model)?;
            model.params_mut().get_mut(id).data_mut()[index] = orig;
            let c = ScalarCheck {
                param: name.clone(),
                index,
                analytic: a,
                numeric: (up - down) / (2.0 * cfg.step),
            };
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max(c.abs_error());
            let ok = if c.magnitude() < cfg.abs_tol {
                c.abs_error() < cfg.abs_tol
            } else {
                report.max_rel_error = report.max_rel_error.max(c.rel_error());
                c.rel_error() < cfg.rel_tol
            };
            if !ok {
                report.failures.push(c);
            }
        }
    }
    report.elapsed = began.elapsed();
    Ok(report)
}
