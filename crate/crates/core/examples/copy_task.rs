//! Train the encoder-decoder on the copy task, with and without relaxed
//! encoder self-attention.
//!
//! cargo run --release --example copy_task [steps]

use relaxed_attention::attention::RelaxationConfig;
use relaxed_attention::harness::gen_copy_task;
use relaxed_attention::training::{sequence_accuracy, train, TrainConfig};
use relaxed_attention::transformer::{Model, ModelConfig};
use relaxed_attention::{Result, RngStream};

fn main() -> Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let mut rng = RngStream::new(0, "data");
    let train_set = gen_copy_task(&mut rng, 13, 6, 2000)?;
    let dev = gen_copy_task(&mut rng, 13, 6, 100)?;
    let test = gen_copy_task(&mut rng, 13, 6, 200)?;

    for (name, relax) in [("baseline", RelaxationConfig::off()), ("γ_self = 0.01", RelaxationConfig::matched(0.01))] {
        let cfg = ModelConfig {
            src_vocab: 13,
            vocab_size: 13,
            relax_self: relax,
            ..ModelConfig::default()
        };
        let mut model = Model::new(cfg, 0)?;
        let tc = TrainConfig {
            steps,
            stop_at_accuracy: Some(0.99),
            ..TrainConfig::default()
        };
        let report = train(&mut model, &train_set, &dev, &tc)?;
        for row in report.log.iter().filter(|r| r.eval_acc.is_some()) {
            println!("{name:>14} step {:>4} loss {:.4} dev acc {:.3}", row.step, row.loss, row.eval_acc.unwrap());
        }
        println!("{name:>14} test accuracy {:.3}\n", sequence_accuracy(&model, &test)?);
    }
    Ok(())
}
