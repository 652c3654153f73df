//! Label-smoothed cross-entropy, Adam, and the teacher-forced train loop.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::decoding::greedy_translate;
use crate::error::{invalid, Error, Result};
use crate::params::ParamStore;
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::transformer::{GammaLog, Model, BOS, EOS};
use crate::Phase;

/// Log floor applied to probabilities inside the loss.
pub const LOG_FLOOR: f64 = 1e-12;

pub struct SmoothedNll<'t> {
    pub loss: Var<'t>,
    /// Entries with positive target mass whose probability hit the floor.
    pub floored: usize,
}

/// Mean over positions of `−Σ_c q(c) log p(c)` with
/// `q = (1 − α)·onehot(target) + α/D`.
pub fn label_smoothed_nll<'t>(p: Var<'t>, targets: &[usize], alpha: f64) -> Result<SmoothedNll<'t>> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid(format!("label smoothing {alpha} outside [0, 1)")));
    }
    let shape = p.shape();
    let [l, d] = shape[..] else {
        return Err(invalid("probabilities must be L × D"));
    };
    if targets.len() != l {
        return Err(Error::Shape {
            op: "label_smoothed_nll",
            left: shape.clone(),
            right: vec![targets.len()],
        });
    }
    let mut q = Tensor::full(&[l, d], alpha / d as f64);
    for (i, &t) in targets.iter().enumerate() {
        if t >= d {
            return Err(Error::TokenOutOfVocab { token: t, vocab: d });
        }
        q.data_mut()[i * d + t] += 1.0 - alpha;
    }
    let floored = {
        let pv = p.value();
        pv.data()
            .iter()
            .zip(q.data())
            .filter(|(&pi, &qi)| qi > 0.0 && pi <= LOG_FLOOR)
            .count()
    };
    let tape = p.tape();
    let loss = p
        .log_floor(LOG_FLOOR)
        .mul(tape.constant(q))?
        .sum()
        .scale(-1.0 / l as f64);
    Ok(SmoothedNll { loss, floored })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-9,
        }
    }
}

/// First/second moment estimates, one buffer per parameter.
#[derive(Clone, Debug, Default)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update from the grad buffers in `store`.
/// Parameters without a gradient are treated as having gradient zero.
pub fn adam_step(store: &mut ParamStore, state: &mut OptimizerState, cfg: &AdamConfig) {
    if state.m.len() != store.len() {
        *state = OptimizerState::new(store);
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for id in 0..store.len() {
        let p = store.get_mut(id);
        let grad = p.grad().map(<[f64]>::to_vec);
        let (m, v) = (&mut state.m[id], &mut state.v[id]);
        let data = p.data_mut();
        for i in 0..data.len() {
            let g = grad.as_ref().map_or(0.0, |g| g[i]);
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            data[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub label_smoothing: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Number of dev pairs used for periodic accuracy checks.
    pub eval_samples: usize,
    /// Stop once periodic dev sequence accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            label_smoothing: 0.1,
            steps: 2000,
            batch_size: 16,
            seed: 0,
            eval_every: 100,
            eval_samples: 100,
            stop_at_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.lr > 0.0) {
            return Err(invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(invalid("label smoothing must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be positive"));
        }
        if self.eval_every == 0 {
            return Err(invalid("eval_every must be positive"));
        }
        Ok(())
    }
}

/// Source tokens and target tokens (no BOS/EOS).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

impl Pair {
    /// Decoder input `[BOS, tgt…]`.
    pub fn decoder_input(&self) -> Vec<usize> {
        std::iter::once(BOS).chain(self.tgt.iter().copied()).collect()
    }

    /// Decoder targets `[tgt…, EOS]`.
    pub fn decoder_target(&self) -> Vec<usize> {
        self.tgt.iter().copied().chain(std::iter::once(EOS)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEffective {
    #[serde(rename = "self")]
    pub self_attn: f64,
    pub cross: f64,
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub loss: f64,
    pub eval_acc: Option<f64>,
    pub gamma_effective: GammaEffective,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub log: Vec<MetricsRow>,
    pub steps_run: usize,
    pub final_eval_acc: Option<f64>,
}

impl TrainReport {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for row in &self.log {
            serde_json::to_writer(&mut w, row)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Mean label-smoothed loss of a batch on one tape; returns loss and the
/// applied γ values.
pub fn batch_loss<'t>(
    tape: &'t Tape,
    model: &Model,
    batch: &[&Pair],
    alpha: f64,
    phase: Phase,
    rng: &mut RngStream,
) -> Result<(Var<'t>, GammaLog)> {
    let mut gammas = GammaLog::default();
    let mut total: Option<Var<'t>> = None;
    for pair in batch {
        let probs = model.forward_on(tape, &pair.src, &pair.decoder_input(), phase, rng, &mut gammas)?;
        let nll = label_smoothed_nll(probs, &pair.decoder_target(), alpha)?.loss;
        total = Some(match total {
            Some(t) => t.add(nll)?,
            None => nll,
        });
    }
    let total = total.ok_or_else(|| invalid("empty batch"))?;
    Ok((total.scale(1.0 / batch.len() as f64), gammas))
}

/// Exact-match rate of greedy decoding against the reference targets.
pub fn sequence_accuracy(model: &Model, pairs: &[Pair]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for pair in pairs {
        let out = greedy_translate(model, &pair.src, pair.tgt.len() + 1)?;
        if out == pair.decoder_target() {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Teacher-forced training with Adam. Relaxation and dropout are active in
/// the training phase; periodic dev evaluation runs in the eval phase.
pub fn train(model: &mut Model, train_set: &[Pair], dev_set: &[Pair], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(invalid("empty training set"));
    }
    let mut state = OptimizerState::new(&model.params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut data_rng = RngStream::new(cfg.seed, "data-order");
    data_rng.shuffle(&mut order);
    let mut cursor = 0;
    let dropout_root = RngStream::new(cfg.seed, "dropout");
    let eval_pairs = &dev_set[..dev_set.len().min(cfg.eval_samples)];
    let mut report = TrainReport::default();

    for step in 1..=cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            if cursor == order.len() {
                data_rng.shuffle(&mut order);
                cursor = 0;
            }
            batch.push(&train_set[order[cursor]]);
            cursor += 1;
        }
        let mut rng = dropout_root.fork(step as u64);
        let tape = Tape::new();
        let (loss, gammas) = batch_loss(&tape, model, &batch, cfg.label_smoothing, Phase::Train, &mut rng)?;
        let loss_value = loss.item();
        if !loss_value.is_finite() {
            return Err(Error::Diverged { step, loss: loss_value });
        }
        model.params.zero_grad();
        tape.backward_into(loss, &mut model.params)?;
        adam_step(&mut model.params, &mut state, &cfg.adam);
        report.steps_run = step;

        let eval_acc = if !eval_pairs.is_empty() && (step % cfg.eval_every == 0 || step == cfg.steps) {
            Some(sequence_accuracy(model, eval_pairs)?)
        } else {
            None
        };
        report.log.push(MetricsRow {
            step,
            loss: loss_value,
            eval_acc,
            gamma_effective: GammaEffective {
                self_attn: mean(&gammas.self_attn),
                cross: mean(&gammas.cross_attn),
            },
        });
        if let Some(acc) = eval_acc {
            report.final_eval_acc = Some(acc);
            if cfg.stop_at_accuracy.is_some_and(|target| acc >= target) {
                break;
            }
        }
    }
    model.params.zero_grad();
    Ok(report)
}
