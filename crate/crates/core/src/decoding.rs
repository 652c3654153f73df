//! Autoregressive decoding: greedy, beam search with an EOS stopping
//! margin, and shallow fusion with an external language model.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::autograd::Tape;
use crate::error::{invalid, Result};
use crate::rng::RngStream;
use crate::transformer::{EncoderOutput, Model, BOS, EOS};
use crate::Phase;

/// `log_p + λ·log_p_lm`, elementwise. The result is a score vector, not a
/// normalized distribution.
pub fn shallow_fusion(log_p: &[f64], log_p_lm: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) {
        return Err(invalid(format!("LM weight {lambda} must be non-negative")));
    }
    if log_p.len() != log_p_lm.len() {
        return Err(invalid(format!(
            "fusion length mismatch: {} vs {}",
            log_p.len(),
            log_p_lm.len()
        )));
    }
    if lambda == 0.0 {
        return Ok(log_p.to_vec());
    }
    Ok(log_p
        .iter()
        .zip(log_p_lm)
        .map(|(a, b)| a + lambda * b)
        .collect())
}

/// External language model over the target vocabulary.
pub trait LmScorer {
    fn vocab_size(&self) -> usize;

    /// `log P_LM(· | prefix)` over all tokens; `prefix` starts with BOS.
    fn log_probs(&self, prefix: &[usize]) -> Vec<f64>;
}

/// Add-k smoothed bigram model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BigramLm {
    vocab: usize,
    k: f64,
    counts: Vec<f64>,
    /// Row-major `log P(b | a)`.
    log_probs: Vec<f64>,
}

impl BigramLm {
    /// Counts bigrams of `BOS s₁ … sₙ EOS` for every sequence.
    pub fn train(corpus: &[Vec<usize>], vocab: usize, k: f64) -> Result<Self> {
        if !(k > 0.0) {
            return Err(invalid(format!("smoothing k = {k} must be positive")));
        }
        if corpus.is_empty() {
            return Err(invalid("empty LM corpus"));
        }
        if vocab <= EOS {
            return Err(invalid("vocabulary must include BOS and EOS"));
        }
        let mut counts = vec![0.0; vocab * vocab];
        for seq in corpus {
            let mut prev = BOS;
            for &t in seq.iter().chain(std::iter::once(&EOS)) {
                if t >= vocab {
                    return Err(crate::Error::TokenOutOfVocab { token: t, vocab });
                }
                counts[prev * vocab + t] += 1.0;
                prev = t;
            }
        }
        let mut log_probs = vec![0.0; vocab * vocab];
        for a in 0..vocab {
            let row = &counts[a * vocab..(a + 1) * vocab];
            let total: f64 = row.iter().sum::<f64>() + k * vocab as f64;
            for b in 0..vocab {
                log_probs[a * vocab + b] = ((row[b] + k) / total).ln();
            }
        }
        Ok(Self {
            vocab,
            k,
            counts,
            log_probs,
        })
    }

    pub fn prob(&self, prev: usize, next: usize) -> f64 {
        self.log_probs[prev * self.vocab + next].exp()
    }

    pub fn count(&self, prev: usize, next: usize) -> f64 {
        self.counts[prev * self.vocab + next]
    }

    pub fn row(&self, prev: usize) -> &[f64] {
        &self.log_probs[prev * self.vocab..(prev + 1) * self.vocab]
    }
}

/// Shorthand for [`BigramLm::train`].
pub fn bigram_lm_train(corpus: &[Vec<usize>], vocab: usize, k: f64) -> Result<BigramLm> {
    BigramLm::train(corpus, vocab, k)
}

impl LmScorer for BigramLm {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn log_probs(&self, prefix: &[usize]) -> Vec<f64> {
        let prev = prefix.last().copied().unwrap_or(BOS);
        self.row(prev).to_vec()
    }
}

/// Lowest index among maximal entries.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn eval_rng() -> RngStream {
    RngStream::new(0, "eval")
}

/// Greedy argmax decoding until EOS or `max_len` generated tokens.
pub fn greedy_decode(model: &Model, h: &EncoderOutput, max_len: usize) -> Result<Vec<usize>> {
    let tape = Tape::new();
    let hv = tape.constant(h.h.clone());
    let mut rng = eval_rng();
    let mut prefix = vec![BOS];
    while prefix.len() <= max_len {
        let p = model.decode_step_on(&tape, hv, &prefix, Phase::Eval, &mut rng)?;
        let tok = argmax(&p);
        prefix.push(tok);
        if tok == EOS {
            break;
        }
    }
    Ok(prefix.split_off(1))
}

/// Encodes `src` and decodes greedily.
pub fn greedy_translate(model: &Model, src: &[usize], max_len: usize) -> Result<Vec<usize>> {
    let h = model.encode(src, Phase::Eval, &mut eval_rng())?;
    greedy_decode(model, &h, max_len)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam: usize,
    /// Shallow-fusion LM weight λ.
    pub lambda: f64,
    /// Maximum generated tokens, EOS included.
    pub max_len: usize,
    /// Stop once `best_finished − best_unfinished ≥ eos_margin` (raw scores).
    pub eos_margin: f64,
    /// Rank final hypotheses by score per generated token.
    pub length_norm: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beam: 4,
            lambda: 0.0,
            max_len: 32,
            eos_margin: 0.0,
            length_norm: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamHypothesis {
    /// Generated tokens, excluding BOS; ends with EOS unless truncated.
    pub tokens: Vec<usize>,
    /// Accumulated fused score `model + λ·lm`.
    pub score: f64,
    pub model_score: f64,
    pub lm_score: f64,
    pub finished: bool,
}

impl BeamHypothesis {
    pub fn ranking_key(&self, length_norm: bool) -> f64 {
        if length_norm && !self.tokens.is_empty() {
            self.score / self.tokens.len() as f64
        } else {
            self.score
        }
    }
}

fn rank_final(hyps: &mut [BeamHypothesis], length_norm: bool) {
    hyps.sort_by(|a, b| {
        b.ranking_key(length_norm)
            .total_cmp(&a.ranking_key(length_norm))
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
}

/// Beam search over fused scores. Returns finished hypotheses, best first.
pub fn beam_search(
    model: &Model,
    h: &EncoderOutput,
    cfg: &BeamConfig,
    lm: Option<&dyn LmScorer>,
) -> Result<Vec<BeamHypothesis>> {
    if cfg.beam == 0 {
        return Err(invalid("beam size must be at least 1"));
    }
    if h.h.is_empty() || h.h.rows() == 0 {
        return Err(invalid("empty encoder output"));
    }
    if !(cfg.lambda >= 0.0) {
        return Err(invalid("LM weight must be non-negative"));
    }
    let vocab = model.config.vocab_size;
    if let Some(lm) = lm {
        if lm.vocab_size() != vocab {
            return Err(invalid("LM vocabulary differs from model vocabulary"));
        }
    }
    let tape = Tape::new();
    let hv = tape.constant(h.h.clone());
    let mut rng = eval_rng();

    let mut active = vec![BeamHypothesis {
        tokens: Vec::new(),
        score: 0.0,
        model_score: 0.0,
        lm_score: 0.0,
        finished: false,
    }];
    let mut finished: Vec<BeamHypothesis> = Vec::new();

    for _ in 0..cfg.max_len {
        // (score, parent rank, token, model logp, lm logp)
        let mut cands: Vec<(f64, usize, usize, f64, f64)> = Vec::new();
        for (rank, hyp) in active.iter().enumerate() {
            let prefix: Vec<usize> = std::iter::once(BOS).chain(hyp.tokens.iter().copied()).collect();
            let p = model.decode_step_on(&tape, hv, &prefix, Phase::Eval, &mut rng)?;
            let log_p: Vec<f64> = p.iter().map(|x| x.ln()).collect();
            let log_lm = match lm {
                Some(lm) if cfg.lambda > 0.0 => lm.log_probs(&prefix),
                _ => vec![0.0; vocab],
            };
            let fused = shallow_fusion(&log_p, &log_lm, cfg.lambda)?;
            for tok in 0..vocab {
                cands.push((hyp.score + fused[tok], rank, tok, log_p[tok], log_lm[tok]));
            }
        }
        cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        cands.truncate(cfg.beam);

        let mut next = Vec::with_capacity(cands.len());
        for (score, rank, tok, lp, llm) in cands {
            let parent = &active[rank];
            let mut tokens = parent.tokens.clone();
            tokens.push(tok);
            let done = tok == EOS || tokens.len() == cfg.max_len;
            let hyp = BeamHypothesis {
                tokens,
                score,
                model_score: parent.model_score + lp,
                lm_score: parent.lm_score + llm,
                finished: done,
            };
            if done {
                finished.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        active = next;
        if active.is_empty() {
            break;
        }
        let best_finished = finished.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        let best_active = active.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        if best_finished - best_active >= cfg.eos_margin {
            break;
        }
    }
    if finished.is_empty() {
        // Only reachable when max_len is 0.
        return Err(invalid("max_len must be positive"));
    }
    rank_final(&mut finished, cfg.length_norm);
    Ok(finished)
}

/// One decoded utterance as written to JSON-lines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedRow {
    pub id: usize,
    pub tokens: Vec<usize>,
    pub score: f64,
    pub lm_lambda: f64,
}

pub fn write_decoded_jsonl<W: Write>(mut w: W, rows: &[DecodedRow]) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Strips a trailing EOS.
pub fn strip_eos(tokens: &[usize]) -> &[usize] {
    match tokens.split_last() {
        Some((&EOS, rest)) => rest,
        _ => tokens,
    }
}
