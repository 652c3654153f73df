//! Synthetic sequence tasks.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::RngStream;
use crate::training::Pair;
use crate::transformer::FIRST_SYMBOL;

fn check_vocab(vocab: usize) -> Result<()> {
    if vocab < FIRST_SYMBOL + 1 {
        return Err(invalid(format!(
            "vocabulary of {vocab} leaves no symbols after PAD/BOS/EOS"
        )));
    }
    Ok(())
}

fn random_symbols(rng: &mut RngStream, vocab: usize, len: usize) -> Vec<usize> {
    (0..len).map(|_| FIRST_SYMBOL + rng.below(vocab - FIRST_SYMBOL)).collect()
}

/// `n` pairs with identical source and target of exactly `len` i.i.d.
/// symbols.
pub fn gen_copy_task(rng: &mut RngStream, vocab: usize, len: usize, n: usize) -> Result<Vec<Pair>> {
    check_vocab(vocab)?;
    Ok((0..n)
        .map(|_| {
            let s = random_symbols(rng, vocab, len);
            Pair { src: s.clone(), tgt: s }
        })
        .collect())
}

/// Like [`gen_copy_task`] with the target reversed.
pub fn gen_reverse_task(rng: &mut RngStream, vocab: usize, len: usize, n: usize) -> Result<Vec<Pair>> {
    let mut pairs = gen_copy_task(rng, vocab, len, n)?;
    for p in &mut pairs {
        p.tgt.reverse();
    }
    Ok(pairs)
}

/// Copy/reverse corpus sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceTaskSpec {
    pub vocab: usize,
    pub len: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
}

impl Default for SequenceTaskSpec {
    fn default() -> Self {
        Self {
            vocab: 13,
            len: 6,
            n_train: 2000,
            n_dev: 100,
            n_test: 200,
        }
    }
}

/// ToyTranslate generator parameters.
///
/// Target sentences are words drawn from a first-order chain. Each source
/// symbol spells one target word, except that some source symbols are
/// homophones standing for either word of a pair. Which word is meant is a
/// fixed function of the previous target word. The parallel corpus never
/// shows a homophone right after a "held-out" word, so that part of the rule
/// can only be learned from the extended text corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTranslateSpec {
    /// Number of distinct target words.
    pub words: usize,
    /// Fraction of target words that are members of a homophone pair.
    pub ambiguity: f64,
    /// Fraction of target words after which homophones are withheld from
    /// the parallel corpus.
    pub heldout: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub n_extended_text: usize,
}

impl Default for ToyTranslateSpec {
    fn default() -> Self {
        Self {
            words: 16,
            ambiguity: 0.25,
            heldout: 0.5,
            min_len: 4,
            max_len: 8,
            n_train: 2000,
            n_dev: 100,
            n_test: 200,
            n_extended_text: 20000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyTranslateTask {
    pub spec: ToyTranslateSpec,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Source symbol of every target word, indexed by target token.
    pub spelling: Vec<usize>,
    /// Homophone pairs `(a, b)` as target tokens sharing one source symbol.
    pub homophones: Vec<(usize, usize)>,
    /// Per target token: after this word a homophone resolves to `b`.
    pub selects_b: Vec<bool>,
    /// Per target token: homophones never follow it in the parallel corpus.
    pub heldout: Vec<bool>,
    pub train: Vec<Pair>,
    pub dev: Vec<Pair>,
    pub test: Vec<Pair>,
    /// Target side of the training pairs.
    pub in_domain_text: Vec<Vec<usize>>,
    pub extended_text: Vec<Vec<usize>>,
}

impl ToyTranslateTask {
    fn symbol_count(&self) -> usize {
        self.src_vocab - FIRST_SYMBOL
    }

    fn homophone_of_symbol(&self, sym: usize) -> Option<(usize, usize)> {
        self.homophones.iter().copied().find(|&(a, _)| self.spelling[a] == sym)
    }

    fn is_homophone_symbol(&self, sym: usize) -> bool {
        self.homophone_of_symbol(sym).is_some()
    }

    /// The word a homophone pair resolves to after `prev`.
    pub fn resolve(&self, pair: (usize, usize), prev: usize) -> usize {
        if self.selects_b[prev] {
            pair.1
        } else {
            pair.0
        }
    }

    fn sentence(&self, rng: &mut RngStream, restricted: bool) -> Pair {
        let spec = &self.spec;
        let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
        let mut src = Vec::with_capacity(len);
        let mut tgt: Vec<usize> = Vec::with_capacity(len);
        for _ in 0..len {
            let prev = tgt.last().copied();
            let blocked = restricted && prev.is_some_and(|p| self.heldout[p]);
            let sym = loop {
                let s = FIRST_SYMBOL + rng.below(self.symbol_count());
                if !(blocked && self.is_homophone_symbol(s)) {
                    break s;
                }
            };
            let word = match self.homophone_of_symbol(sym) {
                Some(pair) => match prev {
                    Some(p) => self.resolve(pair, p),
                    None if rng.bernoulli(0.5) => pair.1,
                    None => pair.0,
                },
                None => (FIRST_SYMBOL..self.tgt_vocab)
                    .find(|&w| self.spelling[w] == sym)
                    .expect("every symbol spells a word"),
            };
            src.push(sym);
            tgt.push(word);
        }
        Pair { src, tgt }
    }
}

/// Builds a ToyTranslate task. All randomness comes from `rng`.
pub fn gen_toy_translate(rng: &mut RngStream, spec: &ToyTranslateSpec) -> Result<ToyTranslateTask> {
    if !(0.0..0.5).contains(&spec.ambiguity) {
        return Err(invalid(format!("ambiguity {} outside [0, 0.5)", spec.ambiguity)));
    }
    if !(0.0..=1.0).contains(&spec.heldout) {
        return Err(invalid("heldout fraction outside [0, 1]"));
    }
    if spec.words < 2 || spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(invalid("ToyTranslate needs ≥ 2 words and 1 ≤ min_len ≤ max_len"));
    }
    let pairs = (spec.ambiguity * spec.words as f64 / 2.0).round() as usize;
    let tgt_vocab = FIRST_SYMBOL + spec.words;
    let src_vocab = tgt_vocab - pairs;

    let mut words: Vec<usize> = (FIRST_SYMBOL..tgt_vocab).collect();
    rng.shuffle(&mut words);
    let mut spelling = vec![0; tgt_vocab];
    let mut homophones = Vec::with_capacity(pairs);
    let mut next_sym = FIRST_SYMBOL;
    for chunk in words[..2 * pairs].chunks(2) {
        let (a, b) = (chunk[0].min(chunk[1]), chunk[0].max(chunk[1]));
        spelling[a] = next_sym;
        spelling[b] = next_sym;
        homophones.push((a, b));
        next_sym += 1;
    }
    for &w in &words[2 * pairs..] {
        spelling[w] = next_sym;
        next_sym += 1;
    }
    homophones.sort_unstable();

    let selects_b = (0..tgt_vocab).map(|w| w >= FIRST_SYMBOL && rng.bernoulli(0.5)).collect();
    let mut order: Vec<usize> = (FIRST_SYMBOL..tgt_vocab).collect();
    rng.shuffle(&mut order);
    let n_heldout = (spec.heldout * spec.words as f64).round() as usize;
    let mut heldout = vec![false; tgt_vocab];
    for &w in &order[..n_heldout] {
        heldout[w] = true;
    }

    let mut task = ToyTranslateTask {
        spec: spec.clone(),
        src_vocab,
        tgt_vocab,
        spelling,
        homophones,
        selects_b,
        heldout,
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
        in_domain_text: Vec::new(),
        extended_text: Vec::new(),
    };
    task.train = (0..spec.n_train).map(|_| task.sentence(rng, true)).collect();
    task.dev = (0..spec.n_dev).map(|_| task.sentence(rng, false)).collect();
    task.test = (0..spec.n_test).map(|_| task.sentence(rng, false)).collect();
    task.in_domain_text = task.train.iter().map(|p| p.tgt.clone()).collect();
    let extra: Vec<Vec<usize>> = (0..spec.n_extended_text).map(|_| task.sentence(rng, false).tgt).collect();
    task.extended_text = task.in_domain_text.clone();
    task.extended_text.extend(extra);
    Ok(task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::bigram_lm_train;

    #[test]
    fn copy_pairs_match_and_reproduce() {
        let a = gen_copy_task(&mut RngStream::new(5, "data"), 8, 5, 50).unwrap();
        let b = gen_copy_task(&mut RngStream::new(5, "data"), 8, 5, 50).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|p| p.src == p.tgt && p.src.len() == 5));
        assert!(a.iter().flat_map(|p| &p.src).all(|&t| (FIRST_SYMBOL..8).contains(&t)));
        assert!(gen_copy_task(&mut RngStream::new(0, "data"), 3, 5, 1).is_err());
    }

    #[test]
    fn copy_tokens_are_uniform() {
        let (vocab, n) = (8usize, 20_000usize);
        let pairs = gen_copy_task(&mut RngStream::new(9, "data"), vocab, 5, n).unwrap();
        let k = vocab - FIRST_SYMBOL;
        let mut hist = vec![0usize; k];
        for &t in pairs.iter().flat_map(|p| &p.src) {
            hist[t - FIRST_SYMBOL] += 1;
        }
        let total = (5 * n) as f64;
        let p = 1.0 / k as f64;
        let sd = (total * p * (1.0 - p)).sqrt();
        for c in hist {
            assert!((c as f64 - total * p).abs() <= 3.0 * sd, "count {c} vs {}", total * p);
        }
    }

    #[test]
    fn reverse_targets() {
        let r = gen_reverse_task(&mut RngStream::new(1, "data"), 9, 4, 10).unwrap();
        for p in r {
            let mut s = p.src.clone();
            s.reverse();
            assert_eq!(s, p.tgt);
        }
    }

    #[test]
    fn zero_ambiguity_is_a_bijection() {
        let spec = ToyTranslateSpec {
            ambiguity: 0.0,
            n_extended_text: 10,
            ..Default::default()
        };
        let t = gen_toy_translate(&mut RngStream::new(2, "data"), &spec).unwrap();
        assert!(t.homophones.is_empty());
        assert_eq!(t.src_vocab, t.tgt_vocab);
        let mut seen = vec![false; t.src_vocab];
        for w in FIRST_SYMBOL..t.tgt_vocab {
            assert!(!seen[t.spelling[w]]);
            seen[t.spelling[w]] = true;
        }
    }

    #[test]
    fn heldout_contexts_never_precede_homophones_in_domain() {
        let t = gen_toy_translate(&mut RngStream::new(3, "data"), &ToyTranslateSpec::default()).unwrap();
        assert_eq!(t.homophones.len(), 2);
        let is_h = |w: usize| t.homophones.iter().any(|&(a, b)| a == w || b == w);
        for s in &t.in_domain_text {
            for w in s.windows(2) {
                assert!(!(t.heldout[w[0]] && is_h(w[1])));
            }
        }
        let ext = t.extended_text[t.in_domain_text.len()..]
            .iter()
            .flat_map(|s| s.windows(2).map(|w| (w[0], w[1])).collect::<Vec<_>>())
            .filter(|&(p, n)| t.heldout[p] && is_h(n))
            .count();
        assert!(ext > 0);
    }

    #[test]
    fn extended_lm_knows_heldout_bigrams() {
        let t = gen_toy_translate(&mut RngStream::new(4, "data"), &ToyTranslateSpec::default()).unwrap();
        let lm_in = bigram_lm_train(&t.in_domain_text, t.tgt_vocab, 0.1).unwrap();
        let lm_ext = bigram_lm_train(&t.extended_text, t.tgt_vocab, 0.1).unwrap();
        let prev = (FIRST_SYMBOL..t.tgt_vocab).find(|&w| t.heldout[w]).unwrap();
        let right = t.resolve(t.homophones[0], prev);
        assert!(lm_ext.prob(prev, right) > lm_in.prob(prev, right));
    }

    #[test]
    fn toy_translate_reproducible() {
        let spec = ToyTranslateSpec {
            n_extended_text: 50,
            ..Default::default()
        };
        let a = gen_toy_translate(&mut RngStream::new(9, "data"), &spec).unwrap();
        let b = gen_toy_translate(&mut RngStream::new(9, "data"), &spec).unwrap();
        assert_eq!(a, b);
    }
}
