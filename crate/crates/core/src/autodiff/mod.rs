//! Reverse-mode differentiation over dense real arrays.
//!
//! The engine is deliberately small: matrix products, the elementwise
//! primitives a GRU and an IQN head need, reductions, concatenation and
//! slicing. Values live on a [`Tape`]; trainable tensors live in a
//! [`ParamStore`] and are copied onto the tape once per pass.
//!
//! ```
//! use iqn_rnn::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::<f64>::new();
//! let x = tape.leaf(Tensor::scalar(3.0).with_requires_grad(true));
//! let y = tape.mul(x, x)?;
//! let grads = tape.backward(y)?;
//! assert_eq!(grads.get(x).unwrap(), &[6.0]);
//! # Ok::<(), iqn_rnn::Error>(())
//! ```

mod element;
mod params;
mod tape;
mod tensor;

pub use element::Element;
pub use params::{ParamId, ParamStore};
pub use tape::{Binary, Gradients, Tape, Unary, Var};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) use tape::CORRUPT_TANH_BACKWARD;
