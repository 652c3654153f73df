//! Windowed self-attention classifier on synthetic feature maps, trained
//! without relaxation and with fuzzy relaxation.
//!
//! cargo run --release --example window_classify [steps]

use relaxed_attention::attention::{RelaxMode, RelaxationConfig};
use relaxed_attention::harness::window_classify::{train_window_classifier, WindowTrainConfig};
use relaxed_attention::harness::{gen_window_classify, WindowClassifier, WindowModelConfig, WindowTaskSpec};
use relaxed_attention::{Result, RngStream};

fn main() -> Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let spec = WindowTaskSpec::default();
    let data = gen_window_classify(&mut RngStream::new(0, "data"), &spec)?;
    for (name, relax) in [
        ("baseline", RelaxationConfig::off()),
        ("fuzzy γ~N(0.1, 0.03²)", RelaxationConfig::fuzzy(0.1, 0.0009, RelaxMode::Matched)),
    ] {
        let cfg = WindowModelConfig { relax, ..WindowModelConfig::default() };
        let mut model = WindowClassifier::new(cfg, &spec, 0)?;
        let losses = train_window_classifier(&mut model, &data.train, &WindowTrainConfig { steps, ..Default::default() })?;
        let tail = &losses[losses.len().saturating_sub(50)..];
        println!(
            "{name:<22} final loss {:.4}  dev acc {:.3}  test acc {:.3}",
            tail.iter().sum::<f64>() / tail.len() as f64,
            model.accuracy(&data.dev)?,
            model.accuracy(&data.test)?
        );
    }
    Ok(())
}
