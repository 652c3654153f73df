//! The full LM-fusion comparison: baseline versus relaxed cross attention,
//! each decoded without an LM, with an in-domain LM and with an LM trained
//! on extended text. Prints the median WER reduction per approach.
//!
//! cargo run --release --example ilm_suppression [seeds] [steps]

use relaxed_attention::harness::runner::ilm_markdown;
use relaxed_attention::harness::{ilm_suppression_report, run_experiment, ExperimentSpec};
use relaxed_attention::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let steps: Option<usize> = args.next().and_then(|s| s.parse().ok());

    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/specs/ilm.toml");
    let mut spec = ExperimentSpec::load(path.as_ref())?;
    spec.seeds = (0..seeds).collect();
    if let Some(s) = steps {
        spec.train.steps = s;
    }
    let dir = std::env::temp_dir().join("relaxatt-ilm-example");
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let outcome = run_experiment(&spec, &dir, workers)?;
    print!("{}", std::fs::read_to_string(dir.join("summary.md"))?);
    println!();
    print!("{}", ilm_markdown(&ilm_suppression_report(&outcome.rows, "wer")?, "wer"));
    println!("\nfull results in {}", dir.display());
    Ok(())
}
