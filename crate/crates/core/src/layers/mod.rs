//! Recurrent, affine and normalization layers.
//!
//! Parameter structs hold [`ParamId`](numcore::ParamId) handles into a
//! [`ParamStore`](numcore::ParamStore); forward passes run on a
//! [`Graph`](numcore::Graph) bound to that store.

mod fc;
mod lstm;
mod norm;
mod seq;

pub use fc::{fc_forward, FcParams};
pub use lstm::{bilstm_forward, lstm_sequence, lstm_step, Direction, LstmParams};
pub use norm::{cln_forward, gln_forward, norm_forward, ClnStream, NormKind, NormMode, NormParams, DEFAULT_NORM_EPS};
pub use seq::SequenceFeature;

use numcore::{Real, Rng, Tensor};

/// Uniform initialization in `[-bound, bound)`.
pub(crate) fn init_uniform<T: Real>(shape: &[usize], bound: f64, rng: &mut Rng) -> Tensor<T> {
    Tensor::uniform(shape, -bound, bound, rng)
}
