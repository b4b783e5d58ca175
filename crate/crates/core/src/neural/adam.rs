use crate::autodiff::{Element, ParamStore};
use crate::error::{Error, Result};

/// Bias-corrected Adam over every tensor in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    first_moment: Vec<Vec<T>>,
    second_moment: Vec<Vec<T>>,
}

impl<T: Element> Adam<T> {
    pub fn new(store: &ParamStore<T>, learning_rate: f64) -> Self {
        let zeros: Vec<Vec<T>> = store.iter().map(|(_, _, t)| vec![T::zero(); t.numel()]).collect();
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the accumulated gradients.
    ///
    /// Gradients are left in place; the caller zeroes them.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if store.len() != self.first_moment.len() {
            return Err(Error::Contract("optimizer state does not match parameter store".into()));
        }
        if let Some((_, name, _)) = store.iter().find(|(_, _, t)| t.grad().is_none()) {
            return Err(Error::Contract(format!("parameter `{name}` has no gradient")));
        }
        self.step += 1;
        let t = self.step as f64;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powf(t);
        let c2 = 1.0 - b2.powf(t);
        let (b1, b2) = (T::of(b1), T::of(b2));
        let (one, lr, eps) = (T::one(), T::of(self.learning_rate), T::of(self.eps));
        let (c1, c2) = (T::of(c1), T::of(c2));

        let ids: Vec<_> = store.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let tensor = store.get_mut(id);
            let grad = tensor.grad().expect("checked above").to_vec();
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for (((p, g), m), v) in tensor.data_mut().iter_mut().zip(&grad).zip(m).zip(v) {
                *m = b1 * *m + (one - b1) * *g;
                *v = b2 * *v + (one - b2) * *g * *g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> (ParamStore<f64>, crate::autodiff::ParamId) {
        let mut store = ParamStore::new();
        let id = store.register("x", &[1]).unwrap();
        store.get_mut(id).assign(&[x]).unwrap();
        (store, id)
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        for g in [2.5, -0.01] {
            let (mut store, id) = scalar_store(1.0);
            let mut adam = Adam::new(&store, 0.001);
            store.get_mut(id).accumulate_grad(&[g]).unwrap();
            adam.step(&mut store).unwrap();
            let moved = store.get(id).data()[0] - 1.0;
            assert!((moved + 0.001 * g.signum()).abs() < 1e-8, "{moved}");
            // Gradients are not touched by the optimizer.
            assert_eq!(store.get(id).grad().unwrap(), &[g]);
        }
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let (mut store, id) = scalar_store(0.37);
        let mut adam = Adam::new(&store, 0.1);
        for _ in 0..50 {
            adam.step(&mut store).unwrap();
        }
        assert_eq!(store.get(id).data(), &[0.37]);
        assert_eq!(adam.steps_taken(), 50);
    }

    #[test]
    fn minimises_a_parabola() {
        let (mut store, id) = scalar_store(1.0);
        let mut adam = Adam::new(&store, 0.1);
        for _ in 0..100 {
            let x = store.get(id).data()[0];
            store.zero_grad();
            store.get_mut(id).accumulate_grad(&[2.0 * x]).unwrap();
            adam.step(&mut store).unwrap();
        }
        let x = store.get(id).data()[0];
        assert!(x.abs() < 0.05, "{x}");
    }

    #[test]
    fn missing_gradient_is_a_contract_error() {
        let (mut store, id) = scalar_store(1.0);
        store.get_mut(id).set_requires_grad(false);
        let mut adam = Adam::new(&store, 0.1);
        assert!(matches!(adam.step(&mut store), Err(Error::Contract(_))));
    }
}
