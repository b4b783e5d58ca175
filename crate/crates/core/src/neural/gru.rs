//! Gated recurrent units.
//!
//! Gate order in every fused tensor is reset, update, candidate. The reset
//! gate multiplies the previous state *before* the recurrent candidate
//! projection:
//!
//! ```text
//! r  = σ(W_r x + U_r h + b_r)
//! z  = σ(W_z x + U_z h + b_z)
//! n  = tanh(W_n x + U_n (r ⊙ h) + b_n)
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use rand::Rng;

use crate::autodiff::{Element, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// One GRU layer.
#[derive(Clone, Debug)]
pub struct GruCell {
    /// `[3H x in]`, gates stacked as reset, update, candidate.
    pub input_weight: ParamId,
    /// `[2H x H]`, reset and update recurrent weights.
    pub hidden_weight_rz: ParamId,
    /// `[H x H]`, candidate recurrent weight applied to `r ⊙ h`.
    pub hidden_weight_n: ParamId,
    /// `[3H]`.
    pub bias: ParamId,
    input_size: usize,
    hidden_size: usize,
}

impl GruCell {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        input_size: usize,
        hidden_size: usize,
    ) -> Result<Self> {
        let h = hidden_size;
        Ok(Self {
            input_weight: store.register(format!("{name}.input_weight"), &[3 * h, input_size])?,
            hidden_weight_rz: store.register(format!("{name}.hidden_weight_rz"), &[2 * h, h])?,
            hidden_weight_n: store.register(format!("{name}.hidden_weight_n"), &[h, h])?,
            bias: store.register(format!("{name}.bias"), &[3 * h])?,
            input_size,
            hidden_size,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn step<T: Element>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var, h: Var) -> Result<Var> {
        let hs = self.hidden_size;
        if tape.shape(x).last() != Some(&self.input_size) {
            return Err(Error::shape("gru input", tape.shape(x), &[self.input_size]));
        }
        if tape.shape(h).last() != Some(&hs) {
            return Err(Error::shape("gru state", tape.shape(h), &[hs]));
        }
        let w_in = tape.param(store, self.input_weight);
        let w_rz = tape.param(store, self.hidden_weight_rz);
        let w_n = tape.param(store, self.hidden_weight_n);
        let bias = tape.param(store, self.bias);

        let gx = tape.matmul_t(x, w_in)?;
        let gx = tape.add(gx, bias)?;
        let gh = tape.matmul_t(h, w_rz)?;
        let gx_rz = tape.slice(gx, 1, 0, 2 * hs)?;
        let rz = tape.add(gx_rz, gh)?;
        let rz = tape.sigmoid(rz);
        let r = tape.slice(rz, 1, 0, hs)?;
        let z = tape.slice(rz, 1, hs, hs)?;

        let rh = tape.mul(r, h)?;
        let hn = tape.matmul_t(rh, w_n)?;
        let gx_n = tape.slice(gx, 1, 2 * hs, hs)?;
        let n = tape.add(gx_n, hn)?;
        let n = tape.tanh(n);

        // h' = n + z ⊙ (h − n)
        let diff = tape.sub(h, n)?;
        let zd = tape.mul(z, diff)?;
        tape.add(n, zd)
    }
}

/// Stacked GRU layers with inverted dropout between layers.
#[derive(Clone, Debug)]
pub struct GruStack {
    cells: Vec<GruCell>,
    dropout: f64,
    hidden_size: usize,
}

impl GruStack {
    pub fn new<T: Element>(
        store: &mut ParamStore<T>,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
        dropout: f64,
    ) -> Result<Self> {
        if num_layers == 0 {
            return Err(Error::Config("GRU needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::Config(format!("dropout {dropout} outside [0, 1)")));
        }
        let cells = (0..num_layers)
            .map(|l| {
                let input = if l == 0 { input_size } else { hidden_size };
                GruCell::new(store, &format!("{name}.layer{l}"), input, hidden_size)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            cells,
            dropout,
            hidden_size,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.cells.len()
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn input_size(&self) -> usize {
        self.cells[0].input_size()
    }

    pub fn cells(&self) -> &[GruCell] {
        &self.cells
    }

    /// Zero state for a batch, one matrix per layer.
    pub fn zero_state<T: Element>(&self, batch: usize) -> Vec<Tensor<T>> {
        vec![Tensor::zeros(&[batch, self.hidden_size]); self.cells.len()]
    }

    /// Advances every layer by one time step.
    ///
    /// Passing an RNG selects training mode: inter-layer activations are
    /// dropped with probability `dropout` and survivors scaled by
    /// `1 / (1 − dropout)`. Without an RNG the stack runs in eval mode.
    pub fn step<T: Element, R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        input: Var,
        state: &[Var],
        mut train_rng: Option<&mut R>,
    ) -> Result<(Var, Vec<Var>)> {
        if state.len() != self.cells.len() {
            return Err(Error::Contract(format!(
                "state has {} layers, stack has {}",
                state.len(),
                self.cells.len()
            )));
        }
        let mut x = input;
        let mut next = Vec::with_capacity(self.cells.len());
        for (l, (cell, &h)) in self.cells.iter().zip(state).enumerate() {
            let h_new = cell.step(tape, store, x, h)?;
            next.push(h_new);
            x = h_new;
            let last = l + 1 == self.cells.len();
            if let (false, Some(rng)) = (last, train_rng.as_deref_mut()) {
                if self.dropout > 0.0 {
                    let keep = 1.0 - self.dropout;
                    let scale = T::of(1.0 / keep);
                    let shape = tape.shape(x).to_vec();
                    let mask: Vec<T> = (0..shape.iter().product::<usize>())
                        .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                        .collect();
                    let mask = tape.constant(Tensor::new(shape, mask)?);
                    x = tape.mul(x, mask)?;
                }
            }
        }
        Ok((x, next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::init_parameters;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type NoRng = ChaCha8Rng;

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn zero_weights_give_zero_state() {
        let mut store = ParamStore::<f64>::new();
        let stack = GruStack::new(&mut store, "gru", 3, 4, 2, 0.0).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[2, 3], 0.7));
        let state: Vec<Var> = stack.zero_state(2).into_iter().map(|s| tape.constant(s)).collect();
        let (out, next) = stack.step(&mut tape, &store, x, &state, None::<&mut NoRng>).unwrap();
        assert!(tape.value(out).data().iter().all(|&v| v == 0.0));
        assert_eq!(next.len(), 2);
    }

    #[test]
    fn scalar_cell_matches_hand_computed_recurrence() {
        let mut store = ParamStore::<f64>::new();
        let cell = GruCell::new(&mut store, "c", 1, 1).unwrap();
        // Gate order: reset, update, candidate.
        let (a_r, a_z, a_n) = (0.5, -0.3, 0.8);
        let (b_r, b_z, b_n) = (0.1, 0.2, -0.1);
        let (u_r, u_z, u_n) = (0.4, 0.6, -0.7);
        store.get_mut(cell.input_weight).assign(&[a_r, a_z, a_n]).unwrap();
        store.get_mut(cell.bias).assign(&[b_r, b_z, b_n]).unwrap();
        store.get_mut(cell.hidden_weight_rz).assign(&[u_r, u_z]).unwrap();
        store.get_mut(cell.hidden_weight_n).assign(&[u_n]).unwrap();
        let (x, h) = (1.5, 0.25);

        let r = sigmoid(a_r * x + b_r + u_r * h);
        let z = sigmoid(a_z * x + b_z + u_z * h);
        let n = (a_n * x + b_n + u_n * (r * h)).tanh();
        let expected = (1.0 - z) * n + z * h;

        let mut tape = Tape::new();
        let xv = tape.constant(Tensor::from_f64(&[1, 1], &[x]).unwrap());
        let hv = tape.constant(Tensor::from_f64(&[1, 1], &[h]).unwrap());
        let out = cell.step(&mut tape, &store, xv, hv).unwrap();
        let got = tape.value(out).item().unwrap();
        assert!((got - expected).abs() < 1e-15, "{got} vs {expected}");
        // Pinned so a silent change of GRU variant shows up.
        assert!((got - 0.512_684_643_035_091_9).abs() < 1e-12, "{got}");
    }

    fn run_stack(stack: &GruStack, store: &ParamStore<f64>, train_seed: Option<u64>) -> Vec<f64> {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::full(&[4, 2], 0.5));
        let state: Vec<Var> = stack.zero_state(4).into_iter().map(|s| tape.constant(s)).collect();
        let mut rng = train_seed.map(ChaCha8Rng::seed_from_u64);
        let (out, _) = stack.step(&mut tape, store, x, &state, rng.as_mut()).unwrap();
        tape.value(out).to_f64_vec()
    }

    #[test]
    fn eval_mode_ignores_dropout_rng() {
        let mut store = ParamStore::<f64>::new();
        let stack = GruStack::new(&mut store, "gru", 2, 8, 3, 0.2).unwrap();
        init_parameters(&mut store, 3);
        let a = run_stack(&stack, &store, None);
        let b = run_stack(&stack, &store, None);
        assert_eq!(a, b);
        let t1 = run_stack(&stack, &store, Some(1));
        let t2 = run_stack(&stack, &store, Some(2));
        assert_ne!(t1, t2);
    }

    #[test]
    fn zero_dropout_train_equals_eval() {
        let mut store = ParamStore::<f64>::new();
        let stack = GruStack::new(&mut store, "gru", 2, 8, 3, 0.0).unwrap();
        init_parameters(&mut store, 4);
        assert_eq!(run_stack(&stack, &store, None), run_stack(&stack, &store, Some(9)));
    }

    #[test]
    fn state_layer_mismatch_is_an_error() {
        let mut store = ParamStore::<f64>::new();
        let stack = GruStack::new(&mut store, "gru", 2, 4, 2, 0.0).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 2]));
        let h = tape.constant(Tensor::zeros(&[1, 4]));
        let res = stack.step(&mut tape, &store, x, &[h], None::<&mut NoRng>);
        assert!(matches!(res, Err(Error::Contract(_))));
    }

    #[test]
    fn state_stays_bounded_over_long_runs() {
        use rand::Rng;
        let mut store = ParamStore::<f64>::new();
        let stack = GruStack::new(&mut store, "gru", 3, 16, 2, 0.0).unwrap();
        init_parameters(&mut store, 11);
        // Exaggerate the weights so gates saturate.
        for id in store.ids().collect::<Vec<_>>() {
            let t = store.get_mut(id);
            let scaled: Vec<f64> = t.data().iter().map(|v| v * 8.0).collect();
            t.assign(&scaled).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = stack.zero_state::<f64>(2);
        for _ in 0..10_000 {
            let mut tape = Tape::no_grad();
            let xs: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
            let x = tape.constant(Tensor::from_f64(&[2, 3], &xs).unwrap());
            let vars: Vec<Var> = state.iter().cloned().map(|s| tape.constant(s)).collect();
            let (_, next) = stack.step(&mut tape, &store, x, &vars, None::<&mut NoRng>).unwrap();
            state = next.iter().map(|&v| tape.value(v).clone()).collect();
        }
        for s in &state {
            assert!(s.data().iter().all(|v| v.is_finite() && v.abs() <= 1.0));
        }
    }
}
