//! Beam search with shallow fusion on the toy translation task: train a
//! model briefly, then decode the test set with a bigram LM at several
//! fusion weights.
//!
//! cargo run --release --example beam_fusion [steps]

use relaxed_attention::decoding::{bigram_lm_train, LmScorer};
use relaxed_attention::harness::runner::{decode_corpus, prepare_task, sequence_metrics, train_cell, TaskData, TrainedModel};
use relaxed_attention::harness::{ExperimentSpec, LmCorpus, RelaxSetting, RelaxSite, TaskKind};
use relaxed_attention::attention::RelaxMode;
use relaxed_attention::Result;

fn main() -> Result<()> {
    let steps = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(800);
    let mut spec = ExperimentSpec::preset("beam-fusion", TaskKind::ToyTranslate);
    spec.train.steps = steps;
    let setting = RelaxSetting::at(RelaxSite::Cross, 0.2, RelaxMode::Matched);
    let cell = train_cell(&spec, &setting, 0)?;
    let TrainedModel::Sequence(model) = &cell.model else { unreachable!() };
    let TaskData::Sequence(data) = prepare_task(&spec, 0)? else { unreachable!() };

    let refs: Vec<Vec<usize>> = data.test.iter().map(|p| p.tgt.clone()).collect();
    for corpus in [LmCorpus::InDomain, LmCorpus::Extended] {
        let lm = bigram_lm_train(data.lm_text(corpus), data.tgt_vocab, 0.1)?;
        for lambda in [0.0, 0.1, 0.2, 0.4] {
            let hyps: Vec<Vec<usize>> = decode_corpus(model, &data.test, &spec, Some(&lm as &dyn LmScorer), lambda)?
                .into_iter()
                .map(|(t, _)| t)
                .collect();
            let m = sequence_metrics(&refs, &hyps)?;
            let line: Vec<String> = m.iter().map(|(k, v)| format!("{k} {v:.4}")).collect();
            println!("{:>9} LM, λ = {lambda:<4} {}", corpus.as_str(), line.join("  "));
        }
    }
    let (src, tgt) = (&data.test[0].src, &data.test[0].tgt);
    let hyp = &decode_corpus(model, &data.test[..1], &spec, None, 0.0)?[0].0;
    println!("\nsource    {src:?}\nreference {tgt:?}\ndecoded   {hyp:?}");
    Ok(())
}
