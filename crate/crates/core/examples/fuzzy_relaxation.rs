//! Distribution of γ under fuzzy relaxation during training, and the fixed
//! value used at evaluation.

use relaxed_attention::attention::{RelaxMode, RelaxationConfig};
use relaxed_attention::{Phase, RngStream};

fn main() {
    let cfg = RelaxationConfig::fuzzy(0.1, 0.03 * 0.03, RelaxMode::Matched);
    let mut rng = RngStream::new(7, "fuzzy");
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| cfg.gamma_for(Phase::Train, &mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    println!("{n} training draws: mean {mean:.5}, std {:.5}", var.sqrt());

    let mut hist = [0usize; 12];
    for g in &draws {
        hist[((g / 0.02) as usize).min(11)] += 1;
    }
    for (i, c) in hist.iter().enumerate() {
        println!("[{:.2}, {:.2}) {}", i as f64 * 0.02, (i + 1) as f64 * 0.02, "#".repeat(c / 1000));
    }
    println!("evaluation γ: {}", cfg.gamma_for(Phase::Eval, &mut rng));
}
