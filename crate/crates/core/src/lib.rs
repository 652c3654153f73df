//! Relaxed attention for transformer encoder-decoders.
//!
//! Relaxed attention blends each row of the attention weights with a
//! uniform distribution, `G̃ = (1 − γ)G + γ/T`. In encoder self-attention it
//! acts as a regularizer; in decoder cross attention it weakens the
//! decoder's implicit language model, which makes shallow fusion with an
//! external LM more effective.
//!
//! The crate is self-contained: a small `f64` tensor type with a
//! reverse-mode tape ([`autograd`]), attention variants ([`attention`]), a
//! toy encoder-decoder ([`transformer`]), beam search with shallow fusion
//! ([`decoding`]), training ([`training`]), metrics ([`metrics`]) and a
//! seeded experiment harness ([`harness`]).

pub mod attention;
pub mod autograd;
pub mod checkpoint;
pub mod decoding;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod metrics;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod transformer;

pub use error::{Error, Result};
pub use params::{ParamId, ParamStore};
pub use rng::RngStream;
pub use tensor::Tensor;

use serde::{Deserialize, Serialize};

/// Training or evaluation; controls dropout and relaxation gating.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Train,
    Eval,
}
