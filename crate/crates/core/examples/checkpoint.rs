//! Save a model, load it back and confirm the reloaded copy is identical.

use relaxed_attention::attention::RelaxationConfig;
use relaxed_attention::harness::{checkpoint_load, checkpoint_save};
use relaxed_attention::transformer::{Model, ModelConfig};
use relaxed_attention::{Phase, Result, RngStream};

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("relaxatt-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let cfg = ModelConfig {
        relax_cross: RelaxationConfig::matched(0.2),
        ..ModelConfig::default()
    };
    let model = Model::new(cfg, 3)?;
    let path = dir.join("model.ckpt");
    checkpoint_save(&model, &path)?;
    let loaded = checkpoint_load(&path)?;
    checkpoint_save(&loaded, &dir.join("again.ckpt"))?;

    let same_bytes = std::fs::read(&path)? == std::fs::read(dir.join("again.ckpt"))?;
    let src = [3, 4, 5, 6];
    let y = [1, 7, 8];
    let p = |m: &Model| m.forward_teacher_forced(&src, &y, Phase::Eval, &mut RngStream::new(0, "eval"));
    let diff = p(&model)?.max_abs_diff(&p(&loaded)?);
    println!("{} parameters, {} bytes", model.params.numel(), std::fs::metadata(&path)?.len());
    println!("re-saved bytes identical: {same_bytes}; max output difference {diff:e}");
    println!("config sidecar:\n{}", std::fs::read_to_string(dir.join("model.ckpt.toml"))?);
    Ok(())
}
