//! Word error rate, corpus BLEU and attention diagnostics.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionWeights;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditAlignment {
    pub deletions: usize,
    pub insertions: usize,
    pub substitutions: usize,
    pub ref_len: usize,
}

impl EditAlignment {
    pub fn errors(&self) -> usize {
        self.deletions + self.insertions + self.substitutions
    }
}

/// Unit-cost Levenshtein alignment. Among minimal alignments the backtrace
/// prefers a match or substitution over an insertion/deletion pair.
pub fn edit_align<T: PartialEq>(reference: &[T], hyp: &[T]) -> EditAlignment {
    let (n, m) = (reference.len(), hyp.len());
    let w = m + 1;
    let mut cost = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        cost[i * w] = i;
    }
    for j in 0..=m {
        cost[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = cost[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hyp[j - 1]);
            let del = cost[(i - 1) * w + j] + 1;
            let ins = cost[i * w + j - 1] + 1;
            cost[i * w + j] = diag.min(del).min(ins);
        }
    }
    let mut out = EditAlignment {
        ref_len: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = cost[i * w + j];
        if i > 0 && j > 0 {
            let sub = usize::from(reference[i - 1] != hyp[j - 1]);
            if cost[(i - 1) * w + j - 1] + sub == here {
                out.substitutions += sub;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cost[(i - 1) * w + j] + 1 == here {
            out.deletions += 1;
            i -= 1;
        } else {
            out.insertions += 1;
            j -= 1;
        }
    }
    out
}

/// Corpus WER: summed errors over summed reference length.
pub fn wer<T: PartialEq>(refs: &[Vec<T>], hyps: &[Vec<T>]) -> Result<f64> {
    if refs.len() != hyps.len() {
        return Err(invalid(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let (mut errors, mut total) = (0, 0);
    for (r, h) in refs.iter().zip(hyps) {
        let a = edit_align(r, h);
        errors += a.errors();
        total += a.ref_len;
    }
    if total == 0 {
        return Err(invalid("total reference length is zero"));
    }
    Ok(errors as f64 / total as f64)
}

fn ngram_counts<T: std::hash::Hash + Eq + Clone>(seq: &[T], n: usize) -> HashMap<Vec<T>, usize> {
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for gram in seq.windows(n) {
            *counts.entry(gram.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Unsmoothed corpus BLEU with a single reference per hypothesis.
pub fn corpus_bleu<T: std::hash::Hash + Eq + Clone>(
    refs: &[Vec<T>],
    hyps: &[Vec<T>],
    max_n: usize,
) -> Result<f64> {
    if hyps.is_empty() {
        return Err(invalid("empty hypothesis corpus"));
    }
    if refs.len() != hyps.len() {
        return Err(invalid(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    if max_n == 0 {
        return Err(invalid("max_n must be positive"));
    }
    let mut matched = vec![0usize; max_n];
    let mut possible = vec![0usize; max_n];
    let (mut ref_len, mut hyp_len) = (0, 0);
    for (r, h) in refs.iter().zip(hyps) {
        ref_len += r.len();
        hyp_len += h.len();
        for n in 1..=max_n {
            let rc = ngram_counts(r, n);
            for (gram, c) in ngram_counts(h, n) {
                matched[n - 1] += c.min(rc.get(&gram).copied().unwrap_or(0));
                possible[n - 1] += c;
            }
        }
    }
    if matched.iter().any(|&m| m == 0) {
        return Ok(0.0);
    }
    let log_p: f64 = matched
        .iter()
        .zip(&possible)
        .map(|(&m, &p)| (m as f64 / p as f64).ln())
        .sum::<f64>()
        / max_n as f64;
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok(bp * log_p.exp())
}

/// Shannon entropy of each row in nats, with `0·ln 0 = 0`.
pub fn row_entropy(rows: &[f64], cols: usize) -> Vec<f64> {
    rows.chunks(cols)
        .map(|row| {
            -row.iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.ln())
                .sum::<f64>()
        })
        .collect()
}

pub fn attention_entropy(g: &AttentionWeights) -> Vec<f64> {
    let t = g.tensor();
    row_entropy(t.data(), t.cols())
}

/// Largest weight of each row.
pub fn attention_peak(g: &AttentionWeights) -> Vec<f64> {
    let t = g.tensor();
    t.data()
        .chunks(t.cols())
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub n_utterances: usize,
    pub config_hash: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn alignment_examples() {
        let a = edit_align(&words("a b c"), &words("a x c d"));
        assert_eq!((a.substitutions, a.insertions, a.deletions, a.ref_len), (1, 1, 0, 3));
        let a = edit_align(&words("a"), &words(""));
        assert_eq!(a.deletions, 1);
        assert_eq!(edit_align(&words("a b"), &words("a b")).errors(), 0);
    }

    #[test]
    fn wer_examples() {
        let r = vec![words("a b c")];
        let h = vec![words("a x c d")];
        assert!((wer(&r, &h).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(wer(&r, &r).unwrap(), 0.0);
        let r = vec![vec![1], vec![2]];
        let h = vec![vec![1, 5], vec![6, 2]];
        assert_eq!(wer(&r, &h).unwrap(), 1.0);
        assert!(wer(&r, &h[..1]).is_err());
        assert!(wer::<usize>(&[vec![]], &[vec![1]]).is_err());
    }

    #[test]
    fn bleu_examples() {
        let r = vec![words("the cat sat")];
        let h = vec![words("the cat")];
        let b = corpus_bleu(&r, &h, 2).unwrap();
        assert!((b - (-0.5f64).exp()).abs() < 1e-12);
        assert!((b - 0.60653).abs() < 1e-5);
        assert_eq!(corpus_bleu(&r, &r, 2).unwrap(), 1.0);
        assert_eq!(corpus_bleu(&r, &[words("dog ran off")], 2).unwrap(), 0.0);
        assert!(corpus_bleu::<&str>(&[], &[], 4).is_err());
    }

    #[test]
    fn entropy_examples() {
        let e = row_entropy(&[0.25, 0.25, 0.25, 0.25, 1.0, 0.0, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0], 4);
        assert!((e[0] - 4f64.ln()).abs() < 1e-15);
        assert_eq!(e[1], 0.0);
        assert!((e[2] - 2f64.ln()).abs() < 1e-15);
    }
}
