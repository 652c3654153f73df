#![allow(dead_code)]

use relaxed_attention::attention::{
    multi_head_attention, windowed_mha, AttnCall, MhaParams, RelaxationConfig, WeightFn, WindowAttnParams,
};
use relaxed_attention::autograd::{Tape, Var};
use relaxed_attention::decoding::{BigramLm, LmScorer};
use relaxed_attention::gradcheck::{finite_diff_grad, relative_error, DEFAULT_STEP};
use relaxed_attention::transformer::{DropoutConfig, Model, ModelConfig, BOS, EOS, FIRST_SYMBOL};
use relaxed_attention::{ParamStore, Phase, RngStream, Tensor};

/// Rows drawn as normalized exponentials, so entries are strictly positive
/// with varied peakedness.
pub fn stochastic_rows(rng: &mut RngStream, rows: usize, cols: usize) -> Tensor {
    let sharp = rng.uniform_range(0.2, 4.0);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let row: Vec<f64> = (0..cols).map(|_| (sharp * rng.standard_normal()).exp()).collect();
        let s: f64 = row.iter().sum();
        data.extend(row.iter().map(|x| x / s));
    }
    Tensor::new(vec![rows, cols], data).unwrap()
}

pub fn normal_tensor(rng: &mut RngStream, shape: &[usize], std: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| std * rng.standard_normal()).collect()).unwrap()
}

pub fn entropy(row: &[f64]) -> f64 {
    -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

#[derive(Clone, Copy, Debug)]
pub struct GradVariant {
    pub weight_fn: WeightFn,
    pub gamma: f64,
    pub bias: bool,
}

impl GradVariant {
    pub fn all() -> Vec<GradVariant> {
        let mut v = Vec::new();
        for weight_fn in [WeightFn::Softmax, WeightFn::SmoothedFocus] {
            for gamma in [0.0, 0.3] {
                for bias in [false, true] {
                    v.push(GradVariant { weight_fn, gamma, bias });
                }
            }
        }
        v
    }

    fn call(&self) -> AttnCall {
        AttnCall {
            relax: if self.gamma > 0.0 {
                RelaxationConfig::matched(self.gamma)
            } else {
                RelaxationConfig::off()
            },
            weight_fn: self.weight_fn,
            dropout_p: 0.0,
            phase: Phase::Eval,
        }
    }
}

const D: usize = 8;
const HEADS: usize = 2;
const T: usize = 5;

enum Layer {
    Plain(MhaParams),
    Window(WindowAttnParams),
}

struct Instance {
    store: ParamStore,
    layer: Layer,
    inputs: Vec<Tensor>,
    readout: Tensor,
}

impl Instance {
    fn new(variant: &GradVariant, seed: u64) -> Self {
        let mut rng = RngStream::new(seed, "gradcheck");
        let mut store = ParamStore::new();
        if variant.bias {
            // 2×4 map, 2×2 windows: two windows of four positions.
            let p = WindowAttnParams::init(&mut store, "win", D, HEADS, 2, &mut rng).unwrap();
            let table = normal_tensor(&mut rng, store.get(p.bias_table).shape(), 1.0);
            store.get_mut(p.bias_table).data_mut().copy_from_slice(table.data());
            let x = normal_tensor(&mut rng, &[8, D], 1.0);
            let readout = normal_tensor(&mut rng, &[8, D], 1.0);
            Self {
                store,
                layer: Layer::Window(p),
                inputs: vec![x],
                readout,
            }
        } else {
            let p = MhaParams::init(&mut store, "mha", D, HEADS, &mut rng).unwrap();
            let q = normal_tensor(&mut rng, &[T, D], 1.0);
            let kv = normal_tensor(&mut rng, &[T, D], 1.0);
            let readout = normal_tensor(&mut rng, &[T, D], 1.0);
            Self {
                store,
                layer: Layer::Plain(p),
                inputs: vec![q, kv],
                readout,
            }
        }
    }

    fn loss<'t>(&self, tape: &'t Tape, store: &ParamStore, inputs: &[Var<'t>], call: &AttnCall) -> Var<'t> {
        let mut rng = RngStream::new(0, "unused");
        let out = match &self.layer {
            Layer::Plain(p) => {
                multi_head_attention(tape, store, inputs[0], inputs[1], inputs[1], p, None, call, &mut rng)
                    .unwrap()
                    .out
            }
            Layer::Window(p) => windowed_mha(tape, store, inputs[0], 2, 4, p, call, &mut rng).unwrap(),
        };
        out.mul(tape.constant(self.readout.clone())).unwrap().sum()
    }

    fn value(&self, store: &ParamStore, inputs: &[Tensor], call: &AttnCall) -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        self.loss(&tape, store, &vars, call).item()
    }
}

/// Largest relative error between analytic and central-difference
/// gradients over inputs and every parameter tensor of one instance.
pub fn mha_grad_error(variant: &GradVariant, seed: u64) -> f64 {
    let inst = Instance::new(variant, seed);
    let call = variant.call();
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inst.inputs.iter().map(|t| tape.input(t.clone())).collect();
    let loss = inst.loss(&tape, &inst.store, &vars, &call);
    let grads = tape.backward(loss).unwrap();
    let mut worst: f64 = 0.0;

    for (i, v) in vars.iter().enumerate() {
        let numeric = finite_diff_grad(
            |t| {
                let mut inputs = inst.inputs.clone();
                inputs[i] = t.clone();
                inst.value(&inst.store, &inputs, &call)
            },
            &inst.inputs[i],
            DEFAULT_STEP,
        );
        worst = worst.max(relative_error(grads.wrt(*v).data(), numeric.data()));
    }
    let param_grads = tape.param_grads(&grads);
    assert_eq!(param_grads.len(), inst.store.len(), "every parameter receives a gradient");
    for (pid, analytic) in param_grads {
        let numeric = finite_diff_grad(
            |t| {
                let mut store = inst.store.clone();
                store.get_mut(pid).data_mut().copy_from_slice(t.data());
                inst.value(&store, &inst.inputs, &call)
            },
            inst.store.get(pid),
            DEFAULT_STEP,
        );
        worst = worst.max(relative_error(analytic, numeric.data()));
    }
    worst
}

pub fn tiny_config(src_vocab: usize, vocab: usize) -> ModelConfig {
    ModelConfig {
        enc_layers: 2,
        dec_layers: 2,
        heads: 2,
        d_model: 16,
        d_ff: 32,
        src_vocab,
        vocab_size: vocab,
        max_len: 16,
        dropout: DropoutConfig::none(),
        ..ModelConfig::default()
    }
}

/// Random model whose output layer is scaled up, so that next-token
/// distributions are far from uniform.
pub fn random_model(config: ModelConfig, seed: u64, sharpen: f64) -> Model {
    let mut m = Model::new(config, seed).unwrap();
    let id = m.params.id("out.w").unwrap();
    m.params.get_mut(id).data_mut().iter_mut().for_each(|w| *w *= sharpen);
    m
}

pub fn random_symbols(rng: &mut RngStream, vocab: usize, len: usize) -> Vec<usize> {
    (0..len).map(|_| FIRST_SYMBOL + rng.below(vocab - FIRST_SYMBOL)).collect()
}

/// Every complete output: EOS-terminated with at most `max_len` tokens, or
/// exactly `max_len` tokens without EOS.
pub fn all_outputs(vocab: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut done = Vec::new();
    let mut frontier: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for p in &frontier {
            for t in 0..vocab {
                let mut s = p.clone();
                s.push(t);
                if t == EOS || s.len() == max_len {
                    done.push(s);
                } else {
                    next.push(s);
                }
            }
        }
        frontier = next;
    }
    done
}

/// `(Σ log P_model, Σ log P_LM)` of `seq` via one teacher-forced pass.
pub fn sequence_scores(model: &Model, src: &[usize], seq: &[usize], lm: Option<&BigramLm>) -> (f64, f64) {
    let mut y = vec![BOS];
    y.extend_from_slice(&seq[..seq.len() - 1]);
    let p = model
        .forward_teacher_forced(src, &y, Phase::Eval, &mut RngStream::new(0, "eval"))
        .unwrap();
    let model_lp: f64 = seq.iter().enumerate().map(|(i, &t)| p.get2(i, t).ln()).sum();
    let lm_lp = match lm {
        Some(lm) => seq
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut prefix = vec![BOS];
                prefix.extend_from_slice(&seq[..i]);
                lm.log_probs(&prefix)[t]
            })
            .sum(),
        None => 0.0,
    };
    (model_lp, lm_lp)
}

/// Exhaustive search: candidates ranked by fused score (optionally per
/// token), best first, as `(tokens, key)`.
pub fn exhaustive_ranking(
    model: &Model,
    src: &[usize],
    lm: Option<&BigramLm>,
    lambda: f64,
    max_len: usize,
    length_norm: bool,
) -> Vec<(Vec<usize>, f64)> {
    let mut scored: Vec<(Vec<usize>, f64)> = all_outputs(model.config.vocab_size, max_len)
        .into_iter()
        .map(|s| {
            let (m, l) = sequence_scores(model, src, &s, lm);
            let fused = m + lambda * l;
            let key = if length_norm { fused / s.len() as f64 } else { fused };
            (s, key)
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    scored
}

/// Two-row Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}
