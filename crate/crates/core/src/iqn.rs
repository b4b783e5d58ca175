//! Implicit quantile emission head.
//!
//! Given a recurrent state `ψ` and a quantile level `τ`, the head returns
//! `g(ψ, τ) = q(ψ ⊙ (1 + φ(τ)))` where
//!
//! * `φ(τ) = ReLU(Σᵢ cos(π i τ) wᵢ + b)` for `i = 0..n`, a learned cosine
//!   embedding with the same width as `ψ`;
//! * `q` is `Linear(H→H) → ReLU → Linear(H→1)` followed by an activation
//!   that maps into the value domain.
//!
//! Trained with the quantile loss at a random `τ`, `g(ψ, ·)` approximates
//! the conditional quantile function of the next observation.
//!
//! ```
//! use iqn_rnn::autodiff::{ParamStore, Tape, Tensor};
//! use iqn_rnn::data::Domain;
//! use iqn_rnn::iqn::IqnHead;
//! use iqn_rnn::neural::init_parameters;
//!
//! let mut store = ParamStore::<f64>::new();
//! let head = IqnHead::new(&mut store, "head", 8, 16, Domain::Positive).unwrap();
//! init_parameters(&mut store, 0);
//!
//! let mut tape = Tape::no_grad();
//! let psi = tape.constant(Tensor::full(&[3, 8], 0.5));
//! let out = head.emit(&mut tape, &store, psi, &[0.1, 0.5, 0.9]).unwrap();
//! assert_eq!(tape.shape(out), &[3, 1]);
//! assert!(tape.value(out).data().iter().all(|&v| v > 0.0));
//! ```

use std::f64::consts::PI;

use crate::autodiff::{Element, ParamStore, Tape, Tensor, Var};
use crate::data::Domain;
use crate::error::{Error, Result};
use crate::neural::Linear;

/// A quantile level in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct QuantileSample(f64);

impl QuantileSample {
    pub fn new(tau: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&tau) {
            Ok(Self(tau))
        } else {
            Err(Error::Domain(format!("quantile level {tau} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_taus(taus: &[f64]) -> Result<()> {
    taus.iter().try_for_each(|&t| QuantileSample::new(t).map(drop))
}

/// Row-major `[taus.len() x n]` matrix of `cos(π i τ)`.
///
/// Uses the Chebyshev recurrence `cos((i+1)θ) = 2 cos θ cos(iθ) − cos((i−1)θ)`.
pub fn cosine_features(taus: &[f64], n: usize) -> Result<Vec<f64>> {
    check_taus(taus)?;
    let mut out = Vec::with_capacity(taus.len() * n);
    for &t in taus {
        let c1 = (PI * t).cos();
        let (mut prev, mut cur) = (c1, 1.0);
        for _ in 0..n {
            out.push(cur);
            let next = 2.0 * c1 * cur - prev;
            prev = cur;
            cur = next;
        }
    }
    Ok(out)
}

/// `φ(τ)`: cosine features projected to the state width, then ReLU.
#[derive(Clone, Debug)]
pub struct CosineEmbedding {
    pub projection: Linear,
    n: usize,
}

impl CosineEmbedding {
    pub fn new<T: Element>(store: &mut ParamStore<T>, name: &str, n: usize, hidden_size: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("cosine embedding needs n >= 1".into()));
        }
        Ok(Self {
            projection: Linear::new(store, name, n, hidden_size)?,
            n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// One row per entry of `taus`.
    pub fn embed<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, taus: &[f64]) -> Result<Var> {
        let feats = cosine_features(taus, self.n)?;
        let feats = tape.constant(Tensor::from_f64(&[taus.len(), self.n], &feats)?);
        let z = self.projection.forward(tape, store, feats)?;
        Ok(tape.relu(z))
    }
}

/// Final activation selected by the value domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Softplus,
    Sigmoid,
}

impl OutputActivation {
    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::Real => Self::Identity,
            Domain::Positive | Domain::Count => Self::Softplus,
            Domain::UnitInterval => Self::Sigmoid,
        }
    }

    pub fn apply<T: Element>(self, tape: &mut Tape<T>, x: Var) -> Var {
        match self {
            Self::Identity => x,
            Self::Softplus => tape.softplus(x),
            Self::Sigmoid => tape.sigmoid(x),
        }
    }
}

/// `q`: two feed-forward layers with a ReLU between them.
#[derive(Clone, Debug)]
pub struct GeneratorHead {
    pub hidden: Linear,
    pub output: Linear,
    pub activation: OutputActivation,
}

impl GeneratorHead {
    pub fn new<T: Element>(store: &mut ParamStore<T>, name: &str, hidden_size: usize, domain: Domain) -> Result<Self> {
        Ok(Self {
            hidden: Linear::new(store, &format!("{name}.hidden"), hidden_size, hidden_size)?,
            output: Linear::new(store, &format!("{name}.output"), hidden_size, 1)?,
            activation: OutputActivation::for_domain(domain),
        })
    }

    pub fn forward<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, store, x)?;
        let h = tape.relu(h);
        let out = self.output.forward(tape, store, h)?;
        Ok(self.activation.apply(tape, out))
    }
}

#[derive(Clone, Debug)]
pub struct IqnHead {
    pub embedding: CosineEmbedding,
    pub generator: GeneratorHead,
    hidden_size: usize,
}

impl IqnHead {
    /// Registers `{name}.embedding.*` and `{name}.generator.*` parameters.
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        hidden_size: usize,
        n_cos: usize,
        domain: Domain,
    ) -> Result<Self> {
        Ok(Self {
            embedding: CosineEmbedding::new(store, &format!("{name}.embedding"), n_cos, hidden_size)?,
            generator: GeneratorHead::new(store, &format!("{name}.generator"), hidden_size, domain)?,
            hidden_size,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    /// τ-quantile predictions `[batch x 1]`; row `b` uses `taus[b]`.
    pub fn emit<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, psi: Var, taus: &[f64]) -> Result<Var> {
        let shape = tape.shape(psi).to_vec();
        if shape.len() != 2 || shape[1] != self.hidden_size || shape[0] != taus.len() {
            return Err(Error::shape("iqn emit", &shape, &[taus.len(), self.hidden_size]));
        }
        let phi = self.embedding.embed(tape, store, taus)?;
        let gate = tape.add_scalar(phi, T::one());
        let modulated = tape.mul(psi, gate)?;
        self.generator.forward(tape, store, modulated)
    }
}

/// `τ (y − ŷ)₊ + (1 − τ)(ŷ − y)₊`.
pub fn quantile_loss(tau: f64, y: f64, y_hat: f64) -> f64 {
    let d = y - y_hat;
    tau * d.max(0.0) + (1.0 - tau) * (-d).max(0.0)
}

/// Elementwise quantile loss on the tape; `y` and `y_hat` are `[batch x 1]`.
pub fn quantile_loss_on_tape<T: Element>(tape: &mut Tape<T>, taus: &[f64], y: Var, y_hat: Var) -> Result<Var> {
    check_taus(taus)?;
    let batch = taus.len();
    let tau = tape.constant(Tensor::from_f64(&[batch, 1], taus)?);
    let one_minus: Vec<f64> = taus.iter().map(|t| 1.0 - t).collect();
    let one_minus = tape.constant(Tensor::from_f64(&[batch, 1], &one_minus)?);
    let d = tape.sub(y, y_hat)?;
    let under = tape.relu(d);
    let nd = tape.neg(d);
    let over = tape.relu(nd);
    let a = tape.mul(tau, under)?;
    let b = tape.mul(one_minus, over)?;
    tape.add(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_parameters, Adam};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn head(domain: Domain, seed: u64) -> (ParamStore<f64>, IqnHead) {
        let mut store = ParamStore::new();
        let head = IqnHead::new(&mut store, "h", 8, 16, domain).unwrap();
        init_parameters(&mut store, seed);
        (store, head)
    }

    fn emit_values(store: &ParamStore<f64>, head: &IqnHead, psi: &[f64], taus: &[f64]) -> Vec<f64> {
        let mut tape = Tape::no_grad();
        let rows: Vec<f64> = taus.iter().flat_map(|_| psi.iter().copied()).collect();
        let psi = tape.constant(Tensor::from_f64(&[taus.len(), psi.len()], &rows).unwrap());
        let out = head.emit(&mut tape, store, psi, taus).unwrap();
        tape.value(out).to_f64_vec()
    }

    #[test]
    fn cosine_features_at_the_ends() {
        assert!(cosine_features(&[0.0], 6).unwrap().iter().all(|&v| v == 1.0));
        let alt = cosine_features(&[1.0], 6).unwrap();
        for (i, v) in alt.iter().enumerate() {
            let expected = if i % 2 == 0 { 1.0 } else { -1.0 };
            assert!((v - expected).abs() < 1e-12);
        }
        assert!(matches!(cosine_features(&[1.5], 4), Err(Error::Domain(_))));
        assert!(QuantileSample::new(-0.1).is_err());
    }

    #[test]
    fn recurrence_matches_direct_cosines() {
        let taus: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let feats = cosine_features(&taus, 64).unwrap();
        for (r, &t) in taus.iter().enumerate() {
            for i in 0..64 {
                let direct = (PI * i as f64 * t).cos();
                assert!((feats[r * 64 + i] - direct).abs() < 1e-12, "τ {t}, i {i}");
            }
        }
    }

    #[test]
    fn zero_projection_embeds_to_zero() {
        let mut store = ParamStore::<f64>::new();
        let e = CosineEmbedding::new(&mut store, "e", 64, 8).unwrap();
        let mut tape = Tape::no_grad();
        let v = e.embed(&mut tape, &store, &[0.0, 0.3, 1.0]).unwrap();
        assert!(tape.value(v).data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_embedding_makes_the_head_a_point_forecaster() {
        let (mut store, head) = head(Domain::Real, 3);
        for id in [head.embedding.projection.weight, head.embedding.projection.bias] {
            let n = store.get(id).numel();
            store.get_mut(id).assign(&vec![0.0; n]).unwrap();
        }
        let psi = [0.3, -0.2, 0.9, 0.1, 0.0, -0.7, 0.5, 0.2];
        let taus: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let out = emit_values(&store, &head, &psi, &taus);

        // Reference: q(ψ) evaluated directly.
        let mut tape = Tape::no_grad();
        let p = tape.constant(Tensor::from_f64(&[1, 8], &psi).unwrap());
        let q = head.generator.forward(&mut tape, &store, p).unwrap();
        let direct = tape.value(q).data()[0];
        assert!(out.iter().all(|&v| v == direct));
    }

    #[test]
    fn outputs_vary_with_tau() {
        let (store, head) = head(Domain::Real, 5);
        let psi = [0.3, -0.2, 0.9, 0.1, 0.4, -0.7, 0.5, 0.2];
        let taus: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let out = emit_values(&store, &head, &psi, &taus);
        let distinct = out.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(distinct > 50, "{distinct}");
    }

    #[test]
    fn emit_rejects_wrong_width() {
        let (store, head) = head(Domain::Real, 0);
        let mut tape = Tape::no_grad();
        let psi = tape.constant(Tensor::zeros(&[2, 7]));
        assert!(matches!(
            head.emit(&mut tape, &store, psi, &[0.1, 0.2]),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn quantile_loss_examples() {
        assert_eq!(quantile_loss(0.5, 1.0, 0.0), 0.5);
        assert!((quantile_loss(0.9, 0.0, 1.0) - 0.1).abs() < 1e-15);
        assert_eq!(quantile_loss(0.3, 2.0, 2.0), 0.0);
    }

    #[test]
    fn tape_loss_matches_scalar_loss() {
        let taus = [0.1, 0.5, 0.9, 0.0];
        let ys = [1.0, -2.0, 0.5, 3.0];
        let yh = [0.0, -1.0, 2.0, 4.0];
        let mut tape = Tape::<f64>::new();
        let y = tape.constant(Tensor::from_f64(&[4, 1], &ys).unwrap());
        let h = tape.constant(Tensor::from_f64(&[4, 1], &yh).unwrap());
        let l = quantile_loss_on_tape(&mut tape, &taus, y, h).unwrap();
        for (i, v) in tape.value(l).data().iter().enumerate() {
            assert_eq!(*v, quantile_loss(taus[i], ys[i], yh[i]));
        }
    }

    /// Lower empirical τ-quantile of a sorted sample (the minimiser's left end).
    fn brute_force_minimiser(sample: &[f64], tau: f64) -> f64 {
        let risk = |q: f64| sample.iter().map(|&y| quantile_loss(tau, y, q)).sum::<f64>();
        // Piecewise linear: the minimum is attained at a sample point.
        let mut best = sample[0];
        for &c in sample {
            if risk(c) < risk(best) - 1e-12 {
                best = c;
            }
        }
        best
    }

    #[test]
    fn expected_loss_is_minimised_at_the_empirical_quantile() {
        let sample = [4.0, -1.0, 2.5, 0.0, 7.0];
        let mut sorted = sample;
        sorted.sort_by(f64::total_cmp);
        for (tau, k) in [(0.1, 0), (0.3, 1), (0.5, 2), (0.7, 3), (0.9, 4)] {
            assert_eq!(brute_force_minimiser(&sample, tau), sorted[k], "tau {tau}");
        }
        // Away from the atoms the risk is strictly larger.
        let risk = |q: f64| sample.iter().map(|&y| quantile_loss(0.5, y, q)).sum::<f64>();
        assert!(risk(2.5) < risk(2.4) && risk(2.5) < risk(2.6));
    }

    proptest! {
        #[test]
        fn loss_is_non_negative_and_convex(tau in 0.0f64..=1.0, y in -10.0f64..10.0, a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let l = |q: f64| quantile_loss(tau, y, q);
            prop_assert!(l(a) >= 0.0);
            prop_assert!(l(0.5 * (a + b)) <= 0.5 * (l(a) + l(b)) + 1e-12);
        }

        #[test]
        fn positive_and_unit_domains_stay_in_range(seed in 0u64..50, scale in 0.1f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for domain in [Domain::Positive, Domain::UnitInterval] {
                let (store, head) = head(domain, seed);
                let psi: Vec<f64> = (0..8).map(|_| rng.random_range(-scale..scale)).collect();
                let taus: Vec<f64> = (0..10).map(|_| rng.random::<f64>()).collect();
                for v in emit_values(&store, &head, &psi, &taus) {
                    match domain {
                        Domain::Positive => prop_assert!(v >= 0.0 && v.is_finite()),
                        _ => prop_assert!((0.0..=1.0).contains(&v)),
                    }
                }
            }
        }
    }

    #[test]
    fn mean_quantile_loss_is_half_the_crps() {
        // Fit the head to N(1, 0.5²) with a constant state, then compare
        // E_τ[L_τ(y, Q̂(τ))] with half of the energy-form CRPS of Q̂(U).
        let (mut store, head) = head(Domain::Real, 11);
        let mut adam = Adam::new(&store, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let target = Normal::new(1.0, 0.5).unwrap();
        let psi_row = [1.0; 8];
        let batch = 64;
        for _ in 0..4000 {
            let taus: Vec<f64> = (0..batch).map(|_| rng.random()).collect();
            let ys: Vec<f64> = (0..batch).map(|_| target.sample(&mut rng)).collect();
            let mut tape = Tape::new();
            let psi = tape.constant(Tensor::full(&[batch, 8], 1.0));
            let y_hat = head.emit(&mut tape, &store, psi, &taus).unwrap();
            let y = tape.constant(Tensor::from_f64(&[batch, 1], &ys).unwrap());
            let l = quantile_loss_on_tape(&mut tape, &taus, y, y_hat).unwrap();
            let loss = tape.mean(l, None).unwrap();
            store.zero_grad();
            tape.backward(loss).unwrap().accumulate_into(&tape, &mut store).unwrap();
            adam.step(&mut store).unwrap();
        }

        let n = 4000;
        let taus: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let q = emit_values(&store, &head, &psi_row, &taus);
        let y_obs = 0.7;
        let losses: Vec<f64> = taus.iter().zip(&q).map(|(&t, &v)| quantile_loss(t, y_obs, v)).collect();
        let mean_loss = losses.iter().sum::<f64>() / n as f64;
        let sd_loss = (losses.iter().map(|l| (l - mean_loss).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();

        let mut sorted = q.clone();
        sorted.sort_by(f64::total_cmp);
        let e_abs = sorted.iter().map(|x| (x - y_obs).abs()).sum::<f64>() / n as f64;
        let nf = n as f64;
        // Σₖ x₍ₖ₎(2k − n − 1)/n² is half the mean absolute pairwise difference.
        let half_spread: f64 = sorted
            .iter()
            .enumerate()
            .map(|(k, x)| x * (2.0 * (k as f64 + 1.0) - nf - 1.0))
            .sum::<f64>()
            / (nf * nf);
        let crps = e_abs - half_spread;
        let three_sigma = 3.0 * sd_loss / nf.sqrt();
        assert!(
            (mean_loss - 0.5 * crps).abs() < three_sigma,
            "{mean_loss} vs {}",
            0.5 * crps
        );

        // The fitted head should resemble the target: median near 1.
        let med = emit_values(&store, &head, &psi_row, &[0.5])[0];
        assert!((med - 1.0).abs() < 0.1, "{med}");
    }
}
