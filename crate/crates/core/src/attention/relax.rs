//! Attention-weight transforms: uniform relaxation, fuzzy coefficient
//! sampling, sigmoid-normalized ("smoothed focus") weights and attention
//! dropout.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::tensor::{sigmoid_scalar, Tensor};
use crate::Phase;

/// When relaxation is active.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxMode {
    /// Standard attention in both phases.
    #[default]
    Off,
    /// Relaxed during training, plain attention at evaluation.
    TrainOnly,
    /// Relaxed during training and evaluation (evaluation uses `gamma0`).
    Matched,
}

/// Relaxation settings for one attention site (all self-attention layers
/// of the encoder share one config; all cross-attention layers another).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelaxationConfig {
    pub gamma0: f64,
    pub sigma2: f64,
    pub mode: RelaxMode,
    pub fuzzy: bool,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self::off()
    }
}

impl RelaxationConfig {
    pub fn off() -> Self {
        Self {
            gamma0: 0.0,
            sigma2: 0.0,
            mode: RelaxMode::Off,
            fuzzy: false,
        }
    }

    pub fn train_only(gamma0: f64) -> Self {
        Self {
            gamma0,
            mode: RelaxMode::TrainOnly,
            ..Self::off()
        }
    }

    pub fn matched(gamma0: f64) -> Self {
        Self {
            gamma0,
            mode: RelaxMode::Matched,
            ..Self::off()
        }
    }

    /// γ drawn from N(gamma0, sigma2) at every training forward pass.
    pub fn fuzzy(gamma0: f64, sigma2: f64, mode: RelaxMode) -> Self {
        Self {
            gamma0,
            sigma2,
            mode,
            fuzzy: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma0) {
            return Err(invalid(format!("gamma0 {} outside [0, 1]", self.gamma0)));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(invalid(format!("sigma2 {} is negative", self.sigma2)));
        }
        if self.fuzzy && self.sigma2 == 0.0 {
            return Err(invalid("fuzzy relaxation requires sigma2 > 0"));
        }
        Ok(())
    }

    pub fn is_off(&self) -> bool {
        self.mode == RelaxMode::Off
    }

    /// The coefficient to use for one forward pass of one attention layer.
    ///
    /// The stream is only advanced for fuzzy training draws.
    pub fn gamma_for(&self, phase: Phase, rng: &mut RngStream) -> f64 {
        match (self.mode, phase) {
            (RelaxMode::Off, _) => 0.0,
            (RelaxMode::TrainOnly, Phase::Eval) => 0.0,
            (RelaxMode::Matched, Phase::Eval) => self.gamma0,
            (_, Phase::Train) if self.fuzzy => {
                rng.normal(self.gamma0, self.sigma2.sqrt()).clamp(0.0, 1.0)
            }
            (_, Phase::Train) => self.gamma0,
        }
    }
}

/// Fuzzy coefficient sampling; see [`RelaxationConfig::gamma_for`].
pub fn sample_fuzzy_gamma(cfg: &RelaxationConfig, rng: &mut RngStream, phase: Phase) -> f64 {
    cfg.gamma_for(phase, rng)
}

/// Row-stochastic attention weights of one head (query length × key length).
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights {
    pub head: usize,
    weights: Tensor,
}

/// Row sums must match 1 to this tolerance for [`AttentionWeights::new`].
pub const SIMPLEX_TOL: f64 = 1e-9;

impl AttentionWeights {
    pub fn new(head: usize, weights: Tensor) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(invalid("attention weights must be 2-D"));
        }
        for (r, row) in weights.data().chunks(weights.cols()).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|&x| x < 0.0) || (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(invalid(format!("row {r} is not on the probability simplex")));
            }
        }
        Ok(Self { head, weights })
    }

    pub(crate) fn new_unchecked(head: usize, weights: Tensor) -> Self {
        Self { head, weights }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.weights
    }

    pub fn into_tensor(self) -> Tensor {
        self.weights
    }

    pub fn query_len(&self) -> usize {
        self.weights.rows()
    }

    pub fn key_len(&self) -> usize {
        self.weights.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.weights.row(i)
    }
}

/// `G̃ = (1 − γ)·G + γ/len`.
pub fn relax_weights(g: &AttentionWeights, gamma: f64, len: usize) -> Result<AttentionWeights> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(invalid(format!("gamma {gamma} outside [0, 1]")));
    }
    if len != g.key_len() {
        return Err(Error::Shape {
            op: "relax_weights",
            left: g.weights.shape().to_vec(),
            right: vec![len],
        });
    }
    let mut out = g.weights.clone();
    relax_in_place(out.data_mut(), gamma, len);
    Ok(AttentionWeights::new_unchecked(g.head, out))
}

pub(crate) fn relax_in_place(data: &mut [f64], gamma: f64, len: usize) {
    let keep = 1.0 - gamma;
    let floor = gamma / len as f64;
    data.iter_mut().for_each(|x| *x = keep * *x + floor);
}

/// `g[ℓ,t] = σ(e[ℓ,t]) / Σₜ σ(e[ℓ,t])`.
pub fn smoothed_focus_weights(e: &Tensor) -> Result<AttentionWeights> {
    if e.shape().len() != 2 {
        return Err(invalid("logits must be 2-D"));
    }
    let c = e.cols();
    let mut out: Vec<f64> = e.data().iter().map(|&x| sigmoid_scalar(x)).collect();
    for (r, row) in out.chunks_mut(c).enumerate() {
        let s: f64 = row.iter().sum();
        if s <= 0.0 {
            return Err(Error::FullyMaskedRow { row: r });
        }
        row.iter_mut().for_each(|x| *x /= s);
    }
    Ok(AttentionWeights::new_unchecked(
        0,
        Tensor::from_parts(e.shape().to_vec(), out),
    ))
}

/// Inverted-dropout mask: each entry is 0 with probability `p`, else `1/(1−p)`.
pub fn dropout_mask(shape: &[usize], p: f64, rng: &mut RngStream) -> Tensor {
    let n: usize = shape.iter().product();
    let keep = 1.0 / (1.0 - p);
    let data = (0..n)
        .map(|_| if rng.uniform() < p { 0.0 } else { keep })
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

pub fn check_dropout(p: f64) -> Result<()> {
    if (0.0..1.0).contains(&p) {
        Ok(())
    } else {
        Err(invalid(format!("dropout rate {p} outside [0, 1)")))
    }
}

/// Dropout on (relaxed) attention weights. Rows generally leave the
/// simplex in the training phase.
pub fn attention_dropout(
    g: &AttentionWeights,
    p: f64,
    rng: &mut RngStream,
    phase: Phase,
) -> Result<Tensor> {
    check_dropout(p)?;
    if phase == Phase::Eval || p == 0.0 {
        return Ok(g.weights.clone());
    }
    let mask = dropout_mask(g.weights.shape(), p, rng);
    let data = g
        .weights
        .data()
        .iter()
        .zip(mask.data())
        .map(|(a, b)| a * b)
        .collect();
    Ok(Tensor::from_parts(g.weights.shape().to_vec(), data))
}
