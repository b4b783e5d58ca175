//! Probabilistic univariate forecasting with an autoregressive GRU whose
//! emission distribution is an implicit quantile network.
//!
//! The crate is organised bottom-up:
//!
//! * [`autodiff`]: tape-based reverse-mode differentiation.
//! * [`neural`]: linear layers, a stacked GRU, Adam, checkpoints.
//! * [`iqn`]: cosine quantile embedding, generator head, quantile loss.
//! * [`forecaster`]: training with teacher forcing and ancestral sampling.
//! * [`data`]: series, datasets, the Gaussian-mixture generator, splits.
//! * [`evaluation`]: CRPS, quantile losses, MSIS, point metrics, backtests.
//! * [`gradcheck`]: finite-difference verification of the full model.

// Negated float comparisons (`!(x > 0.0)`) are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod forecaster;
pub mod gradcheck;
pub mod iqn;
pub mod neural;

pub use error::{Error, Result};
