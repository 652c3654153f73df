//! Word error rate with its alignment counts, and corpus BLEU.

use relaxed_attention::metrics::{corpus_bleu, edit_align, wer};
use relaxed_attention::Result;

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn main() -> Result<()> {
    let refs = vec![words("the cat sat on the mat"), words("a dog barked")];
    let hyps = vec![words("the cat sat on mat"), words("the dog barked loudly")];
    for (r, h) in refs.iter().zip(&hyps) {
        let a = edit_align(r, h);
        println!(
            "{:<28} | {:<28} S={} D={} I={} N={}",
            r.join(" "),
            h.join(" "),
            a.substitutions,
            a.deletions,
            a.insertions,
            a.ref_len
        );
    }
    println!("WER  {:.4}", wer(&refs, &hyps)?);
    println!("BLEU {:.4}", corpus_bleu(&refs, &hyps, 4)?);
    println!("BLEU-2 {:.4}", corpus_bleu(&refs, &hyps, 2)?);
    Ok(())
}
