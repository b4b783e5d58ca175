//! Layers, the recurrent stack, initialisation and optimisation.

mod adam;
pub mod checkpoint;
mod gru;
mod linear;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Element, ParamStore};

pub use adam::Adam;
pub use gru::{GruCell, GruStack};
pub use linear::Linear;

/// Re-initialises every parameter from `seed`.
///
/// Rank ≥ 2 tensors are weights and are drawn uniformly from
/// `[−1/√fan_in, 1/√fan_in]` where `fan_in` is the trailing dimension.
/// Lower-rank tensors are biases and are set to zero. Parameters are visited
/// in registration order, so the result depends only on `seed` and the model
/// layout.
pub fn init_parameters<T: Element>(store: &mut ParamStore<T>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for id in store.ids().collect::<Vec<_>>() {
        let t = store.get_mut(id);
        let values: Vec<T> = if t.rank() >= 2 {
            let fan_in = *t.shape().last().expect("rank >= 2");
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            (0..t.numel())
                .map(|_| T::of(rng.random_range(-bound..=bound)))
                .collect()
        } else {
            vec![T::zero(); t.numel()]
        };
        t.assign(&values).expect("same length");
    }
}
