//! How relaxation reshapes a peaked attention distribution, and what a
//! relaxed multi-head attention call reports.

use relaxed_attention::attention::{
    multi_head_attention, relax_weights, AttentionWeights, AttnCall, MhaParams, RelaxationConfig,
};
use relaxed_attention::autograd::Tape;
use relaxed_attention::metrics::{attention_entropy, attention_peak};
use relaxed_attention::{ParamStore, Phase, Result, RngStream, Tensor};

fn main() -> Result<()> {
    let g = AttentionWeights::new(0, Tensor::from_rows(&[vec![0.85, 0.1, 0.05, 0.0]])?)?;
    println!("{:>5}  {:<32} {:>7} {:>6}", "γ", "weights", "entropy", "peak");
    for gamma in [0.0, 0.1, 0.25, 0.5, 1.0] {
        let r = relax_weights(&g, gamma, 4)?;
        let row: Vec<String> = r.row(0).iter().map(|x| format!("{x:.3}")).collect();
        println!(
            "{gamma:>5}  {:<32} {:>7.4} {:>6.3}",
            row.join(" "),
            attention_entropy(&r)[0],
            attention_peak(&r)[0]
        );
    }

    let mut rng = RngStream::new(0, "example");
    let mut store = ParamStore::new();
    let params = MhaParams::init(&mut store, "mha", 8, 2, &mut rng)?;
    let x = Tensor::new(vec![5, 8], (0..40).map(|_| rng.standard_normal()).collect())?;
    for (phase, relax) in [
        (Phase::Eval, RelaxationConfig::off()),
        (Phase::Train, RelaxationConfig::train_only(0.2)),
        (Phase::Eval, RelaxationConfig::train_only(0.2)),
        (Phase::Eval, RelaxationConfig::matched(0.2)),
    ] {
        let tape = Tape::new();
        let xv = tape.constant(x.clone());
        let call = AttnCall { relax, phase, ..AttnCall::plain(phase) };
        let out = multi_head_attention(&tape, &store, xv, xv, xv, &params, None, &call, &mut rng)?;
        let w = AttentionWeights::new(0, out.heads[0].weights.tensor())?;
        println!(
            "{:?} {:?}: applied γ = {}, head-0 min weight {:.4}",
            relax.mode,
            phase,
            out.gamma,
            w.tensor().data().iter().cloned().fold(f64::INFINITY, f64::min)
        );
    }
    Ok(())
}
