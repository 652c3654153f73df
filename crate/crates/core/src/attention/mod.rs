//! Attention-weight machinery: scaled dot-product multi-head attention,
//! uniform relaxation of the weights (with a fuzzy variant), smoothed
//! focus, window attention with relative position bias, and attention
//! dropout applied after relaxation.

pub mod mha;
pub mod relax;
pub mod window;

pub use mha::{
    attention_head, causal_mask, multi_head_attention, AttnCall, HeadOutput, MhaOutput, MhaParams,
    WeightFn, MASK_SENTINEL,
};
pub use relax::{
    attention_dropout, dropout_mask, relax_weights, sample_fuzzy_gamma, smoothed_focus_weights,
    AttentionWeights, RelaxMode, RelaxationConfig,
};
pub use window::{window_merge, window_partition, windowed_mha, WindowAttnParams};
