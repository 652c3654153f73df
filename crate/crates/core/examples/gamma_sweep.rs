//! Dev WER as a function of the cross-attention relaxation coefficient.
//!
//! cargo run --release --example gamma_sweep [steps]

use relaxed_attention::harness::{gamma_sweep, ExperimentSpec, RelaxSite, TaskKind};
use relaxed_attention::Result;

fn main() -> Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let mut spec = ExperimentSpec::preset("gamma-sweep", TaskKind::ToyTranslate);
    spec.seeds = vec![0, 1];
    spec.train.steps = steps;
    let dir = std::env::temp_dir().join("relaxatt-sweep-example");
    let grid = [0.0, 0.1, 0.2, 0.3, 0.5];
    let rows = gamma_sweep(&spec, RelaxSite::Cross, &grid, &dir, 1)?;
    for g in grid {
        let vals: Vec<f64> = rows.iter().filter(|r| r.gamma == g).map(|r| r.value).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        println!("γ_cross = {g:<4} dev WER {mean:.4}  per seed {vals:.4?}");
    }
    println!("csv: {}", dir.join("sweep_cross.csv").display());
    Ok(())
}
