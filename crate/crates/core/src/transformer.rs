//! Toy-scale post-norm encoder-decoder transformer.
//!
//! Encoder blocks: self-attention (relaxable) → Add & Norm → feed-forward →
//! Add & Norm. Decoder blocks: causal self-attention → Add & Norm → cross
//! attention over the encoder output (relaxable) → Add & Norm →
//! feed-forward → Add & Norm. Token embeddings are scaled by `√d` and summed
//! with sinusoidal positions.
//!
//! Scalar parameter count, with `d` the model dim, `f` the feed-forward dim,
//! `S`/`D` the source/target vocab sizes:
//!
//! ```text
//! enc block  = (4d² + d) + 2·2d + (2df + f + d)
//! dec block  = 2(4d² + d) + 3·2d + (2df + f + d)
//! total      = N_e·enc + N_d·dec + S·d + D·d + (d·D + D)
//! ```

use serde::{Deserialize, Serialize};

use crate::attention::mha::init_uniform;
use crate::attention::relax::{check_dropout, dropout_mask};
use crate::attention::{causal_mask, multi_head_attention, AttnCall, MhaParams, RelaxationConfig, WeightFn};
use crate::autograd::{Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::Phase;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
/// First index available for ordinary symbols.
pub const FIRST_SYMBOL: usize = 3;

pub const LN_EPS: f64 = 1e-5;

/// Dropout rates for the three dropout sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DropoutConfig {
    pub residual: f64,
    pub activation: f64,
    pub attention: f64,
}

impl DropoutConfig {
    pub fn none() -> Self {
        Self {
            residual: 0.0,
            activation: 0.0,
            attention: 0.0,
        }
    }

    /// Residual / activation / attention = 0.1 / 0.1 / 0.0.
    pub fn asr_preset() -> Self {
        Self {
            residual: 0.1,
            activation: 0.1,
            attention: 0.0,
        }
    }

    /// Residual / activation / attention = 0.3 / 0.1 / 0.1.
    pub fn mt_preset() -> Self {
        Self {
            residual: 0.3,
            activation: 0.1,
            attention: 0.1,
        }
    }
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            residual: 0.1,
            activation: 0.1,
            attention: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub src_vocab: usize,
    /// Target vocabulary size `D`.
    pub vocab_size: usize,
    pub max_len: usize,
    pub dropout: DropoutConfig,
    pub relax_self: RelaxationConfig,
    pub relax_cross: RelaxationConfig,
    pub weight_fn_self: WeightFn,
    pub weight_fn_cross: WeightFn,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            enc_layers: 2,
            dec_layers: 2,
            heads: 4,
            d_model: 32,
            d_ff: 64,
            src_vocab: 16,
            vocab_size: 16,
            max_len: 32,
            dropout: DropoutConfig::default(),
            relax_self: RelaxationConfig::off(),
            relax_cross: RelaxationConfig::off(),
            weight_fn_self: WeightFn::Softmax,
            weight_fn_cross: WeightFn::Softmax,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(invalid(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.vocab_size <= EOS || self.src_vocab <= EOS {
            return Err(invalid("vocabularies must include PAD, BOS and EOS"));
        }
        if self.max_len == 0 || self.d_ff == 0 {
            return Err(invalid("max_len and d_ff must be positive"));
        }
        check_dropout(self.dropout.residual)?;
        check_dropout(self.dropout.activation)?;
        check_dropout(self.dropout.attention)?;
        self.relax_self.validate()?;
        self.relax_cross.validate()
    }

    /// Closed-form scalar parameter count (see module docs).
    pub fn param_count(&self) -> usize {
        let (d, f) = (self.d_model, self.d_ff);
        let mha = MhaParams::numel(d);
        let ffn = 2 * d * f + f + d;
        let enc = mha + 2 * 2 * d + ffn;
        let dec = 2 * mha + 3 * 2 * d + ffn;
        self.enc_layers * enc
            + self.dec_layers * dec
            + self.src_vocab * d
            + self.vocab_size * d
            + d * self.vocab_size
            + self.vocab_size
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Token indices; EOS may appear at most once and only last.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence(pub Vec<usize>);

impl TokenSequence {
    pub fn validate(&self, vocab: usize) -> Result<()> {
        if let Some(&t) = self.0.iter().find(|&&t| t >= vocab) {
            return Err(Error::TokenOutOfVocab { token: t, vocab });
        }
        if let Some(p) = self.0.iter().position(|&t| t == EOS) {
            if p + 1 != self.0.len() {
                return Err(invalid("EOS must be the final token"));
            }
        }
        Ok(())
    }
}

impl std::ops::Deref for TokenSequence {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

/// Encoded input sequence `h`, T × d.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub h: Tensor,
}

#[derive(Clone, Debug)]
pub(crate) struct LayerNormParams {
    pub(crate) gain: ParamId,
    pub(crate) bias: ParamId,
}

#[derive(Clone, Debug)]
pub(crate) struct FeedForward {
    pub(crate) w1: ParamId,
    pub(crate) b1: ParamId,
    pub(crate) w2: ParamId,
    pub(crate) b2: ParamId,
}

#[derive(Clone, Debug)]
struct EncoderBlock {
    attn: MhaParams,
    ln1: LayerNormParams,
    ff: FeedForward,
    ln2: LayerNormParams,
}

#[derive(Clone, Debug)]
struct DecoderBlock {
    self_attn: MhaParams,
    ln1: LayerNormParams,
    cross_attn: MhaParams,
    ln2: LayerNormParams,
    ff: FeedForward,
    ln3: LayerNormParams,
}

/// Encoder-decoder transformer with its parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    src_emb: ParamId,
    tgt_emb: ParamId,
    out_w: ParamId,
    out_b: ParamId,
    encoder: Vec<EncoderBlock>,
    decoder: Vec<DecoderBlock>,
}

pub(crate) fn layer_norm_params(store: &mut ParamStore, name: &str, d: usize) -> LayerNormParams {
    LayerNormParams {
        gain: store.add(format!("{name}.gain"), Tensor::full(&[d], 1.0)),
        bias: store.add(format!("{name}.bias"), Tensor::zeros(&[d])),
    }
}

pub(crate) fn feed_forward(store: &mut ParamStore, name: &str, d: usize, f: usize, rng: &mut RngStream) -> FeedForward {
    FeedForward {
        w1: store.add(format!("{name}.w1"), init_uniform(rng, &[d, f], d)),
        b1: store.add(format!("{name}.b1"), Tensor::zeros(&[f])),
        w2: store.add(format!("{name}.w2"), init_uniform(rng, &[f, d], f)),
        b2: store.add(format!("{name}.b2"), Tensor::zeros(&[d])),
    }
}

/// `pe[p, 2i] = sin(p / 10000^(2i/d))`, `pe[p, 2i+1] = cos(·)`.
pub fn sinusoidal_positions(len: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(&[len, d]);
    for p in 0..len {
        for i in 0..d {
            let k = (i / 2 * 2) as f64 / d as f64;
            let angle = p as f64 / 10000f64.powf(k);
            t.data_mut()[p * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    t
}

/// Per-forward bookkeeping of applied relaxation coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GammaLog {
    pub self_attn: Vec<f64>,
    pub cross_attn: Vec<f64>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(seed, "init");
        let mut store = ParamStore::new();
        let (d, f, h) = (config.d_model, config.d_ff, config.heads);
        let src_emb = store.add("src_emb", init_uniform(&mut rng, &[config.src_vocab, d], d));
        let tgt_emb = store.add("tgt_emb", init_uniform(&mut rng, &[config.vocab_size, d], d));
        let mut encoder = Vec::new();
        for l in 0..config.enc_layers {
            let p = format!("enc.{l}");
            encoder.push(EncoderBlock {
                attn: MhaParams::init(&mut store, &format!("{p}.self"), d, h, &mut rng)?,
                ln1: layer_norm_params(&mut store, &format!("{p}.ln1"), d),
                ff: feed_forward(&mut store, &format!("{p}.ff"), d, f, &mut rng),
                ln2: layer_norm_params(&mut store, &format!("{p}.ln2"), d),
            });
        }
        let mut decoder = Vec::new();
        for l in 0..config.dec_layers {
            let p = format!("dec.{l}");
            decoder.push(DecoderBlock {
                self_attn: MhaParams::init(&mut store, &format!("{p}.self"), d, h, &mut rng)?,
                ln1: layer_norm_params(&mut store, &format!("{p}.ln1"), d),
                cross_attn: MhaParams::init(&mut store, &format!("{p}.cross"), d, h, &mut rng)?,
                ln2: layer_norm_params(&mut store, &format!("{p}.ln2"), d),
                ff: feed_forward(&mut store, &format!("{p}.ff"), d, f, &mut rng),
                ln3: layer_norm_params(&mut store, &format!("{p}.ln3"), d),
            });
        }
        let out_w = store.add("out.w", init_uniform(&mut rng, &[d, config.vocab_size], d));
        let out_b = store.add("out.b", Tensor::zeros(&[config.vocab_size]));
        Ok(Self {
            config,
            params: store,
            src_emb,
            tgt_emb,
            out_w,
            out_b,
            encoder,
            decoder,
        })
    }

    /// Same architecture with different relaxation settings; weights are shared by value.
    pub fn with_relaxation(&self, relax_self: RelaxationConfig, relax_cross: RelaxationConfig) -> Result<Self> {
        let mut m = self.clone();
        m.config.relax_self = relax_self;
        m.config.relax_cross = relax_cross;
        m.config.validate()?;
        Ok(m)
    }

    fn check_tokens(&self, tokens: &[usize], vocab: usize) -> Result<()> {
        if tokens.is_empty() {
            return Err(invalid("empty token sequence"));
        }
        if tokens.len() > self.config.max_len {
            return Err(Error::TooLong {
                len: tokens.len(),
                max_len: self.config.max_len,
            });
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= vocab) {
            return Err(Error::TokenOutOfVocab { token: t, vocab });
        }
        Ok(())
    }

    fn dropout<'t>(&self, tape: &'t Tape, x: Var<'t>, p: f64, phase: Phase, rng: &mut RngStream) -> Result<Var<'t>> {
        if phase == Phase::Eval || p == 0.0 {
            return Ok(x);
        }
        let mask = dropout_mask(&x.shape(), p, rng);
        x.mul(tape.constant(mask))
    }

    fn layer_norm<'t>(&self, tape: &'t Tape, x: Var<'t>, ln: &LayerNormParams) -> Result<Var<'t>> {
        x.layer_norm(tape.param(&self.params, ln.gain), tape.param(&self.params, ln.bias), LN_EPS)
    }

    fn feed_forward<'t>(&self, tape: &'t Tape, x: Var<'t>, ff: &FeedForward, phase: Phase, rng: &mut RngStream) -> Result<Var<'t>> {
        let p = &self.params;
        let hidden = x
            .matmul(tape.param(p, ff.w1))?
            .add_row(tape.param(p, ff.b1))?
            .relu();
        let hidden = self.dropout(tape, hidden, self.config.dropout.activation, phase, rng)?;
        hidden.matmul(tape.param(p, ff.w2))?.add_row(tape.param(p, ff.b2))
    }

    /// `x + dropout(sub)` followed by layer norm.
    fn add_norm<'t>(
        &self,
        tape: &'t Tape,
        x: Var<'t>,
        sub: Var<'t>,
        ln: &LayerNormParams,
        phase: Phase,
        rng: &mut RngStream,
    ) -> Result<Var<'t>> {
        let sub = self.dropout(tape, sub, self.config.dropout.residual, phase, rng)?;
        self.layer_norm(tape, x.add(sub)?, ln)
    }

    fn embed<'t>(&self, tape: &'t Tape, table: ParamId, tokens: &[usize]) -> Result<Var<'t>> {
        let d = self.config.d_model;
        let e = tape.param(&self.params, table).gather_rows(tokens)?;
        let pos = tape.constant(sinusoidal_positions(tokens.len(), d));
        e.scale((d as f64).sqrt()).add(pos)
    }

    /// Embedded target prefix (scaled embedding + positions), L × d.
    pub fn embed_target<'t>(&self, tape: &'t Tape, prefix: &[usize]) -> Result<Var<'t>> {
        self.check_tokens(prefix, self.config.vocab_size)?;
        self.embed(tape, self.tgt_emb, prefix)
    }

    fn attn_call(&self, relax: RelaxationConfig, weight_fn: WeightFn, phase: Phase) -> AttnCall {
        AttnCall {
            relax,
            weight_fn,
            dropout_p: self.config.dropout.attention,
            phase,
        }
    }

    /// Encoder on the tape. Returns `h` (T × d).
    pub fn encode_on<'t>(
        &self,
        tape: &'t Tape,
        src: &[usize],
        phase: Phase,
        rng: &mut RngStream,
        gammas: &mut GammaLog,
    ) -> Result<Var<'t>> {
        self.check_tokens(src, self.config.src_vocab)?;
        let x = self.embed(tape, self.src_emb, src)?;
        let mut x = self.dropout(tape, x, self.config.dropout.residual, phase, rng)?;
        let call = self.attn_call(self.config.relax_self, self.config.weight_fn_self, phase);
        for block in &self.encoder {
            let a = multi_head_attention(tape, &self.params, x, x, x, &block.attn, None, &call, rng)?;
            gammas.self_attn.push(a.gamma);
            x = self.add_norm(tape, x, a.out, &block.ln1, phase, rng)?;
            let f = self.feed_forward(tape, x, &block.ff, phase, rng)?;
            x = self.add_norm(tape, x, f, &block.ln2, phase, rng)?;
        }
        Ok(x)
    }

    /// Decoder on already-embedded targets. Returns per-position output
    /// probabilities, L × D.
    pub fn decode_embedded<'t>(
        &self,
        tape: &'t Tape,
        h: Var<'t>,
        y: Var<'t>,
        phase: Phase,
        rng: &mut RngStream,
        gammas: &mut GammaLog,
    ) -> Result<Var<'t>> {
        let len = y.shape()[0];
        let mask = causal_mask(len);
        let mut y = self.dropout(tape, y, self.config.dropout.residual, phase, rng)?;
        let self_call = self.attn_call(RelaxationConfig::off(), WeightFn::Softmax, phase);
        let cross_call = self.attn_call(self.config.relax_cross, self.config.weight_fn_cross, phase);
        for block in &self.decoder {
            let s = multi_head_attention(tape, &self.params, y, y, y, &block.self_attn, Some(&mask), &self_call, rng)?;
            y = self.add_norm(tape, y, s.out, &block.ln1, phase, rng)?;
            let c = multi_head_attention(tape, &self.params, y, h, h, &block.cross_attn, None, &cross_call, rng)?;
            gammas.cross_attn.push(c.gamma);
            y = self.add_norm(tape, y, c.out, &block.ln2, phase, rng)?;
            let f = self.feed_forward(tape, y, &block.ff, phase, rng)?;
            y = self.add_norm(tape, y, f, &block.ln3, phase, rng)?;
        }
        let logits = y
            .matmul(tape.param(&self.params, self.out_w))?
            .add_row(tape.param(&self.params, self.out_b))?;
        Ok(logits.softmax_rows())
    }

    /// Teacher-forced probabilities on the tape; `y` starts with BOS.
    pub fn forward_on<'t>(
        &self,
        tape: &'t Tape,
        src: &[usize],
        y: &[usize],
        phase: Phase,
        rng: &mut RngStream,
        gammas: &mut GammaLog,
    ) -> Result<Var<'t>> {
        if y.first() != Some(&BOS) {
            return Err(invalid("decoder input must start with BOS"));
        }
        let h = self.encode_on(tape, src, phase, rng, gammas)?;
        let ye = self.embed_target(tape, y)?;
        self.decode_embedded(tape, h, ye, phase, rng, gammas)
    }

    pub fn encode(&self, src: &[usize], phase: Phase, rng: &mut RngStream) -> Result<EncoderOutput> {
        let tape = Tape::new();
        let h = self.encode_on(&tape, src, phase, rng, &mut GammaLog::default())?;
        Ok(EncoderOutput { h: h.tensor() })
    }

    /// Next-token distribution `P_ℓ` after `prefix` (which starts with BOS).
    pub fn decode_step(&self, h: &EncoderOutput, prefix: &[usize], phase: Phase, rng: &mut RngStream) -> Result<Vec<f64>> {
        let tape = Tape::new();
        self.decode_step_on(&tape, tape.constant(h.h.clone()), prefix, phase, rng)
    }

    pub(crate) fn decode_step_on<'t>(
        &self,
        tape: &'t Tape,
        h: Var<'t>,
        prefix: &[usize],
        phase: Phase,
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        if prefix.first() != Some(&BOS) {
            return Err(invalid("prefix must start with BOS"));
        }
        let ye = self.embed_target(tape, prefix)?;
        let probs = self.decode_embedded(tape, h, ye, phase, rng, &mut GammaLog::default())?;
        let v = probs.value();
        Ok(v.row(prefix.len() - 1).to_vec())
    }

    /// All L next-token distributions at once (L × D).
    pub fn forward_teacher_forced(&self, src: &[usize], y: &[usize], phase: Phase, rng: &mut RngStream) -> Result<Tensor> {
        let tape = Tape::new();
        Ok(self
            .forward_on(&tape, src, y, phase, rng, &mut GammaLog::default())?
            .tensor())
    }
}
