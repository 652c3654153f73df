//! Scaled dot-product multi-head attention with optional relaxation.

use crate::attention::relax::{check_dropout, dropout_mask, RelaxationConfig};
use crate::autograd::{concat_cols, Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::Phase;

use serde::{Deserialize, Serialize};

/// Additive logit for masked positions. Finite so that softmax and its
/// gradient stay NaN-free; `exp(-1e30 - max)` underflows to exactly 0.
pub const MASK_SENTINEL: f64 = -1e30;

/// How attention logits become weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightFn {
    #[default]
    Softmax,
    /// Sigmoid activations normalized over keys.
    SmoothedFocus,
}

/// Per-head projections `W_i^(Q), W_i^(K), W_i^(V)` (each d × d/N_h), plus
/// the output layer (d × d weight, length-d bias).
#[derive(Clone, Debug)]
pub struct MhaParams {
    pub d: usize,
    pub heads: usize,
    pub wq: Vec<ParamId>,
    pub wk: Vec<ParamId>,
    pub wv: Vec<ParamId>,
    pub wo: ParamId,
    pub bo: ParamId,
    /// Logit scale; `1/√d` for sequence attention.
    pub scale: f64,
}

/// Uniform in `±1/√fan_in`.
pub(crate) fn init_uniform(rng: &mut RngStream, shape: &[usize], fan_in: usize) -> Tensor {
    let a = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| rng.uniform_range(-a, a)).collect())
}

impl MhaParams {
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        d: usize,
        heads: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(invalid(format!("model dim {d} not divisible by {heads} heads")));
        }
        let dh = d / heads;
        let mut mk = |kind: &str| -> Vec<ParamId> {
            (0..heads)
                .map(|i| store.add(format!("{prefix}.w{kind}.{i}"), init_uniform(rng, &[d, dh], d)))
                .collect()
        };
        let wq = mk("q");
        let wk = mk("k");
        let wv = mk("v");
        let wo = store.add(format!("{prefix}.wo"), init_uniform(rng, &[d, d], d));
        let bo = store.add(format!("{prefix}.bo"), Tensor::zeros(&[d]));
        Ok(Self {
            d,
            heads,
            wq,
            wk,
            wv,
            wo,
            bo,
            scale: 1.0 / (d as f64).sqrt(),
        })
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    /// Scalar parameter count: 3·d·d (per-head projections) + d·d + d.
    pub fn numel(d: usize) -> usize {
        4 * d * d + d
    }
}

/// Per-call attention settings.
#[derive(Clone, Copy, Debug)]
pub struct AttnCall {
    pub relax: RelaxationConfig,
    pub weight_fn: WeightFn,
    pub dropout_p: f64,
    pub phase: Phase,
}

impl AttnCall {
    pub fn plain(phase: Phase) -> Self {
        Self {
            relax: RelaxationConfig::off(),
            weight_fn: WeightFn::Softmax,
            dropout_p: 0.0,
            phase,
        }
    }
}

/// Output of one head.
pub struct HeadOutput<'t> {
    pub out: Var<'t>,
    /// Attention weights after relaxation, before dropout.
    pub weights: Var<'t>,
}

/// Bound inputs shared by all heads of one layer call.
pub(crate) struct HeadInputs<'a, 't> {
    pub q: Var<'t>,
    pub k: Var<'t>,
    pub v: Var<'t>,
    pub mask: Option<Var<'t>>,
    /// Additive per-head logit bias (relative position bias).
    pub bias: Option<&'a [Var<'t>]>,
}

pub(crate) fn head_forward<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    params: &MhaParams,
    head: usize,
    inputs: &HeadInputs<'_, 't>,
    gamma: f64,
    call: &AttnCall,
    rng: &mut RngStream,
) -> Result<HeadOutput<'t>> {
    let qp = inputs.q.matmul(tape.param(store, params.wq[head]))?;
    let kp = inputs.k.matmul(tape.param(store, params.wk[head]))?;
    let vp = inputs.v.matmul(tape.param(store, params.wv[head]))?;
    let mut logits = qp.matmul_t(kp)?.scale(params.scale);
    if let Some(bias) = inputs.bias {
        logits = logits.add(bias[head])?;
    }
    if let Some(mask) = inputs.mask {
        logits = logits.add(mask)?;
    }
    let mut weights = match call.weight_fn {
        WeightFn::Softmax => logits.softmax_rows(),
        WeightFn::SmoothedFocus => logits.sigmoid().row_normalize()?,
    };
    if gamma > 0.0 {
        let len = weights.shape()[1];
        weights = weights.affine(1.0 - gamma, gamma / len as f64);
    }
    let mut dropped = weights;
    if call.phase == Phase::Train && call.dropout_p > 0.0 {
        let mask = dropout_mask(&weights.shape(), call.dropout_p, rng);
        dropped = weights.mul(tape.constant(mask))?;
    }
    Ok(HeadOutput {
        out: dropped.matmul(vp)?,
        weights,
    })
}

fn check_inputs(q: &[usize], k: &[usize], v: &[usize], d: usize) -> Result<()> {
    if q.len() != 2 || q[1] != d {
        return Err(Error::Shape {
            op: "attention query",
            left: q.to_vec(),
            right: vec![d],
        });
    }
    if k.len() != 2 || v.len() != 2 || k[1] != d || v[1] != d || k[0] != v[0] {
        return Err(Error::Shape {
            op: "attention key/value",
            left: k.to_vec(),
            right: v.to_vec(),
        });
    }
    Ok(())
}

fn prepare(
    q: &[usize],
    k: &[usize],
    v: &[usize],
    params: &MhaParams,
    has_mask: bool,
    call: &AttnCall,
    rng: &mut RngStream,
) -> Result<f64> {
    check_inputs(q, k, v, params.d)?;
    check_dropout(call.dropout_p)?;
    call.relax.validate()?;
    let gamma = call.relax.gamma_for(call.phase, rng);
    if gamma > 0.0 && has_mask {
        return Err(invalid(
            "relaxation spreads weight over all keys and cannot be combined with a mask",
        ));
    }
    Ok(gamma)
}

/// One attention head: returns its output (L̃ × d/N_h) and post-relaxation weights.
#[allow(clippy::too_many_arguments)]
pub fn attention_head<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    q: Var<'t>,
    k: Var<'t>,
    v: Var<'t>,
    params: &MhaParams,
    head: usize,
    mask: Option<&Tensor>,
    call: &AttnCall,
    rng: &mut RngStream,
) -> Result<HeadOutput<'t>> {
    if head >= params.heads {
        return Err(invalid(format!("head {head} out of range")));
    }
    let gamma = prepare(&q.shape(), &k.shape(), &v.shape(), params, mask.is_some(), call, rng)?;
    let inputs = HeadInputs {
        q,
        k,
        v,
        mask: mask.map(|m| tape.constant(m.clone())),
        bias: None,
    };
    head_forward(tape, store, params, head, &inputs, gamma, call, rng)
}

/// Result of a full multi-head call.
pub struct MhaOutput<'t> {
    pub out: Var<'t>,
    pub heads: Vec<HeadOutput<'t>>,
    /// Relaxation coefficient actually applied in this call.
    pub gamma: f64,
}

/// All heads, concatenated and passed through the output layer. One γ is
/// resolved per call and shared by every head.
#[allow(clippy::too_many_arguments)]
pub fn multi_head_attention<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    q: Var<'t>,
    k: Var<'t>,
    v: Var<'t>,
    params: &MhaParams,
    mask: Option<&Tensor>,
    call: &AttnCall,
    rng: &mut RngStream,
) -> Result<MhaOutput<'t>> {
    let gamma = prepare(&q.shape(), &k.shape(), &v.shape(), params, mask.is_some(), call, rng)?;
    let inputs = HeadInputs {
        q,
        k,
        v,
        mask: mask.map(|m| tape.constant(m.clone())),
        bias: None,
    };
    mha_with_gamma(tape, store, params, &inputs, gamma, call, rng)
}

pub(crate) fn mha_with_gamma<'t>(
    tape: &'t Tape,
    store: &ParamStore,
    params: &MhaParams,
    inputs: &HeadInputs<'_, 't>,
    gamma: f64,
    call: &AttnCall,
    rng: &mut RngStream,
) -> Result<MhaOutput<'t>> {
    let heads = (0..params.heads)
        .map(|h| head_forward(tape, store, params, h, inputs, gamma, call, rng))
        .collect::<Result<Vec<_>>>()?;
    let outs: Vec<Var<'t>> = heads.iter().map(|h| h.out).collect();
    let cat = if outs.len() == 1 { outs[0] } else { concat_cols(&outs)? };
    let out = cat
        .matmul(tape.param(store, params.wo))?
        .add_row(tape.param(store, params.bo))?;
    Ok(MhaOutput { out, heads, gamma })
}

/// Lower-triangular additive mask: position ℓ may attend to keys ≤ ℓ.
pub fn causal_mask(n: usize) -> Tensor {
    let mut t = Tensor::zeros(&[n, n]);
    for i in 0..n {
        for j in (i + 1)..n {
            t.data_mut()[i * n + j] = MASK_SENTINEL;
        }
    }
    t
}
