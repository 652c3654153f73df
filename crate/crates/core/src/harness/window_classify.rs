//! Classification of small synthetic feature maps through windowed relaxed
//! attention, mean pooling and a linear head.

use serde::{Deserialize, Serialize};

use crate::attention::mha::init_uniform;
use crate::attention::{windowed_mha, AttnCall, RelaxationConfig, WeightFn, WindowAttnParams};
use crate::attention::relax::{dropout_mask, RelaxMode};
use crate::autograd::{Tape, Var};
use crate::error::{invalid, Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::training::{adam_step, label_smoothed_nll, AdamConfig, OptimizerState};
use crate::transformer::{feed_forward, layer_norm_params, FeedForward, LayerNormParams, LN_EPS};
use crate::Phase;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowTaskSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
    /// Side of the square class pattern stamped into each map.
    pub pattern: usize,
    /// Standard deviation of the background noise.
    pub noise: f64,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
}

impl Default for WindowTaskSpec {
    fn default() -> Self {
        Self {
            height: 8,
            width: 8,
            channels: 4,
            classes: 4,
            pattern: 2,
            noise: 1.0,
            n_train: 800,
            n_dev: 200,
            n_test: 400,
        }
    }
}

/// One feature map, `(height·width) × channels` in row-major spatial order.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowSample {
    pub x: Tensor,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowDataset {
    pub spec: WindowTaskSpec,
    /// Per class, `pattern² × channels` template values.
    pub templates: Vec<Vec<f64>>,
    pub train: Vec<WindowSample>,
    pub dev: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

fn sample(rng: &mut RngStream, spec: &WindowTaskSpec, templates: &[Vec<f64>]) -> WindowSample {
    let (h, w, c, p) = (spec.height, spec.width, spec.channels, spec.pattern);
    let mut data: Vec<f64> = (0..h * w * c).map(|_| spec.noise * rng.standard_normal()).collect();
    let label = rng.below(spec.classes);
    let y0 = rng.below(h - p + 1);
    let x0 = rng.below(w - p + 1);
    for dy in 0..p {
        for dx in 0..p {
            let pos = (y0 + dy) * w + x0 + dx;
            let t = &templates[label][(dy * p + dx) * c..(dy * p + dx + 1) * c];
            for (v, tv) in data[pos * c..(pos + 1) * c].iter_mut().zip(t) {
                *v += tv;
            }
        }
    }
    WindowSample {
        x: Tensor::from_parts(vec![h * w, c], data),
        label,
    }
}

/// Each map is background noise plus the template of its class at a random
/// position.
pub fn gen_window_classify(rng: &mut RngStream, spec: &WindowTaskSpec) -> Result<WindowDataset> {
    if spec.classes < 2 || spec.channels == 0 {
        return Err(invalid("need at least two classes and one channel"));
    }
    if spec.pattern == 0 || spec.pattern > spec.height.min(spec.width) {
        return Err(invalid("pattern does not fit in the map"));
    }
    let n = spec.pattern * spec.pattern * spec.channels;
    let templates: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..n).map(|_| 2.0 * rng.standard_normal()).collect())
        .collect();
    let mut draw = |count: usize| (0..count).map(|_| sample(rng, spec, &templates)).collect::<Vec<_>>();
    let train = draw(spec.n_train);
    let dev = draw(spec.n_dev);
    let test = draw(spec.n_test);
    Ok(WindowDataset {
        spec: spec.clone(),
        templates,
        train,
        dev,
        test,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowModelConfig {
    pub dim: usize,
    pub heads: usize,
    pub window: usize,
    pub layers: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub relax: RelaxationConfig,
}

impl Default for WindowModelConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            heads: 2,
            window: 4,
            layers: 1,
            d_ff: 32,
            dropout: 0.0,
            relax: RelaxationConfig::fuzzy(0.1, 0.03 * 0.03, RelaxMode::Matched),
        }
    }
}

#[derive(Clone, Debug)]
struct WindowBlock {
    attn: WindowAttnParams,
    ln1: LayerNormParams,
    ff: FeedForward,
    ln2: LayerNormParams,
}

#[derive(Clone, Debug)]
pub struct WindowClassifier {
    pub config: WindowModelConfig,
    pub params: ParamStore,
    height: usize,
    width: usize,
    channels: usize,
    classes: usize,
    embed_w: ParamId,
    embed_b: ParamId,
    blocks: Vec<WindowBlock>,
    head_w: ParamId,
    head_b: ParamId,
}

impl WindowClassifier {
    pub fn new(config: WindowModelConfig, task: &WindowTaskSpec, seed: u64) -> Result<Self> {
        config.relax.validate()?;
        if config.dim == 0 || config.heads == 0 || config.dim % config.heads != 0 {
            return Err(invalid("dim must be a positive multiple of heads"));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(invalid("dropout must be in [0, 1)"));
        }
        let mut rng = RngStream::new(seed, "init");
        let mut store = ParamStore::new();
        let (c, d) = (task.channels, config.dim);
        let embed_w = store.add("embed.w", init_uniform(&mut rng, &[c, d], c));
        let embed_b = store.add("embed.b", Tensor::zeros(&[d]));
        let mut blocks = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("block.{l}");
            blocks.push(WindowBlock {
                attn: WindowAttnParams::init(&mut store, &format!("{p}.attn"), d, config.heads, config.window, &mut rng)?,
                ln1: layer_norm_params(&mut store, &format!("{p}.ln1"), d),
                ff: feed_forward(&mut store, &format!("{p}.ff"), d, config.d_ff, &mut rng),
                ln2: layer_norm_params(&mut store, &format!("{p}.ln2"), d),
            });
        }
        let head_w = store.add("head.w", init_uniform(&mut rng, &[d, task.classes], d));
        let head_b = store.add("head.b", Tensor::zeros(&[task.classes]));
        Ok(Self {
            config,
            params: store,
            height: task.height,
            width: task.width,
            channels: task.channels,
            classes: task.classes,
            embed_w,
            embed_b,
            blocks,
            head_w,
            head_b,
        })
    }

    fn dropout<'t>(&self, tape: &'t Tape, x: Var<'t>, phase: Phase, rng: &mut RngStream) -> Result<Var<'t>> {
        if phase == Phase::Eval || self.config.dropout == 0.0 {
            return Ok(x);
        }
        x.mul(tape.constant(dropout_mask(&x.shape(), self.config.dropout, rng)))
    }

    fn norm<'t>(&self, tape: &'t Tape, x: Var<'t>, ln: &LayerNormParams) -> Result<Var<'t>> {
        x.layer_norm(tape.param(&self.params, ln.gain), tape.param(&self.params, ln.bias), LN_EPS)
    }

    /// Class probabilities, 1 × classes.
    pub fn forward_on<'t>(&self, tape: &'t Tape, x: &Tensor, phase: Phase, rng: &mut RngStream) -> Result<Var<'t>> {
        let expected = [self.height * self.width, self.channels];
        if x.shape() != expected {
            return Err(Error::Shape {
                op: "window_classifier",
                left: x.shape().to_vec(),
                right: expected.to_vec(),
            });
        }
        let p = &self.params;
        let mut h = tape
            .constant(x.clone())
            .matmul(tape.param(p, self.embed_w))?
            .add_row(tape.param(p, self.embed_b))?;
        let call = AttnCall {
            relax: self.config.relax,
            weight_fn: WeightFn::Softmax,
            dropout_p: 0.0,
            phase,
        };
        for block in &self.blocks {
            let a = windowed_mha(tape, p, h, self.height, self.width, &block.attn, &call, rng)?;
            let a = self.dropout(tape, a, phase, rng)?;
            h = self.norm(tape, h.add(a)?, &block.ln1)?;
            let f = h
                .matmul(tape.param(p, block.ff.w1))?
                .add_row(tape.param(p, block.ff.b1))?
                .relu()
                .matmul(tape.param(p, block.ff.w2))?
                .add_row(tape.param(p, block.ff.b2))?;
            let f = self.dropout(tape, f, phase, rng)?;
            h = self.norm(tape, h.add(f)?, &block.ln2)?;
        }
        Ok(h.mean_rows()
            .matmul(tape.param(p, self.head_w))?
            .add_row(tape.param(p, self.head_b))?
            .softmax_rows())
    }

    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        let tape = Tape::new();
        let probs = self.forward_on(&tape, x, Phase::Eval, &mut RngStream::new(0, "eval"))?;
        let probs = probs.tensor();
        Ok(crate::decoding::argmax(probs.data()))
    }

    pub fn accuracy(&self, samples: &[WindowSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(invalid("no samples to evaluate"));
        }
        let mut hits = 0;
        for s in samples {
            if self.predict(&s.x)? == s.label {
                hits += 1;
            }
        }
        Ok(hits as f64 / samples.len() as f64)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowTrainConfig {
    pub adam: AdamConfig,
    pub label_smoothing: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for WindowTrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            label_smoothing: 0.1,
            steps: 600,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// Returns the per-step training loss.
pub fn train_window_classifier(
    model: &mut WindowClassifier,
    data: &[WindowSample],
    cfg: &WindowTrainConfig,
) -> Result<Vec<f64>> {
    if data.is_empty() || cfg.batch_size == 0 {
        return Err(invalid("empty training data or batch"));
    }
    let mut state = OptimizerState::new(&model.params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut data_rng = RngStream::new(cfg.seed, "data-order");
    data_rng.shuffle(&mut order);
    let mut cursor = 0;
    let dropout_root = RngStream::new(cfg.seed, "dropout");
    let mut losses = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        let mut rng = dropout_root.fork(step as u64);
        let tape = Tape::new();
        let mut total: Option<Var<'_>> = None;
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                data_rng.shuffle(&mut order);
                cursor = 0;
            }
            let s = &data[order[cursor]];
            cursor += 1;
            let probs = model.forward_on(&tape, &s.x, Phase::Train, &mut rng)?;
            let nll = label_smoothed_nll(probs, &[s.label], cfg.label_smoothing)?.loss;
            total = Some(match total {
                Some(t) => t.add(nll)?,
                None => nll,
            });
        }
        let loss = total.expect("batch is non-empty").scale(1.0 / cfg.batch_size as f64);
        let value = loss.item();
        if !value.is_finite() {
            return Err(Error::Diverged { step, loss: value });
        }
        model.params.zero_grad();
        tape.backward_into(loss, &mut model.params)?;
        adam_step(&mut model.params, &mut state, &cfg.adam);
        losses.push(value);
    }
    model.params.zero_grad();
    Ok(losses)
}
