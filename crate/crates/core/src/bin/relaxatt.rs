use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use relaxed_attention::checkpoint::{load_params, save_params};
use relaxed_attention::decoding::{bigram_lm_train, write_decoded_jsonl, DecodedRow, LmScorer};
use relaxed_attention::harness::runner::{
    self, decode_corpus, ilm_markdown, prepare_task, read_results, resolve_output_dir, sequence_metrics,
    train_cell, window_config_for, TaskData, TrainedModel,
};
use relaxed_attention::harness::{
    checkpoint_load, checkpoint_save, default_gamma_grid, gamma_sweep, ilm_suppression_report, run_experiment,
    ExperimentSpec, LmCorpus, RelaxSetting, RelaxSite, WindowClassifier,
};
use relaxed_attention::metrics::MetricReport;
use relaxed_attention::training::{Pair, TrainReport};
use relaxed_attention::{Error, Result};

#[derive(Parser)]
#[command(name = "relaxatt", version, about = "Relaxed attention experiments on synthetic tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; defaults to $RELAXATT_OUTPUT_ROOT/<name> (root "runs").
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the spec's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for experiment cells.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

impl Common {
    fn load(&self) -> Result<(ExperimentSpec, PathBuf)> {
        let mut spec = ExperimentSpec::load(&self.spec)?;
        if let Some(seed) = self.seed {
            spec.seeds = vec![seed];
        }
        let dir = resolve_output_dir(&spec, self.out.as_deref());
        fs::create_dir_all(&dir)?;
        Ok((spec, dir))
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Clone, Copy, ValueEnum)]
enum Split {
    Dev,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum LmChoice {
    None,
    InDomain,
    Extended,
}

#[derive(Clone, Copy, ValueEnum)]
enum Site {
    #[value(name = "self")]
    SelfAttn,
    Cross,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model (first seed, chosen setting) and save a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// Relaxation setting label; defaults to the first in the spec.
        #[arg(long)]
        setting: Option<String>,
    },
    /// Beam-search decode a split with a trained checkpoint.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        #[arg(long, value_enum, default_value = "none")]
        lm: LmChoice,
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
    },
    /// Score a checkpoint on a split and write a metric report.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Run every (setting × seed) cell of a spec.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Dev metric as a function of γ at one attention site.
    SweepGamma {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        site: Site,
        /// Comma-separated γ values (must include 0).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// LM-induced improvement table from an experiment's results.
    ReportIlm {
        /// `results.jsonl` of an experiment run.
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "wer")]
        metric: String,
        /// Directory for ilm_report.{json,md}; defaults to the results directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn pick_setting(spec: &ExperimentSpec, label: Option<&str>) -> Result<RelaxSetting> {
    match label {
        None => Ok(spec.relax[0].clone()),
        Some(l) => spec
            .relax
            .iter()
            .find(|r| r.label() == l)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("no relaxation setting labelled `{l}`"))),
    }
}

fn split_pairs(data: &runner::SequenceData, split: Split) -> &[Pair] {
    match split {
        Split::Dev => &data.dev,
        Split::Test => &data.test,
    }
}

fn cmd_train(common: &Common, setting: Option<&str>) -> Result<()> {
    let (spec, dir) = common.load()?;
    let setting = pick_setting(&spec, setting)?;
    let seed = spec.seeds[0];
    let cell = train_cell(&spec, &setting, seed)?;
    let ckpt = dir.join("model.ckpt");
    match &cell.model {
        TrainedModel::Sequence(model) => {
            checkpoint_save(model, &ckpt)?;
            let report = TrainReport {
                steps_run: cell.log.len(),
                final_eval_acc: cell.log.iter().rev().find_map(|r| r.eval_acc),
                log: cell.log,
            };
            report.write_jsonl(fs::File::create(dir.join("train_log.jsonl"))?)?;
            println!(
                "trained `{}` seed {seed}: {} steps, dev accuracy {:?}",
                setting.label(),
                report.steps_run,
                report.final_eval_acc
            );
        }
        TrainedModel::Window(model) => {
            save_params(&ckpt, &model.params)?;
            runner::write_jsonl(&dir.join("train_losses.jsonl"), &cell.window_losses)?;
            println!("trained `{}` seed {seed}: {} steps", setting.label(), cell.window_losses.len());
        }
    }
    println!("checkpoint: {}", ckpt.display());
    Ok(())
}

fn sequence_data(spec: &ExperimentSpec) -> Result<runner::SequenceData> {
    match prepare_task(spec, spec.seeds[0])? {
        TaskData::Sequence(d) => Ok(d),
        TaskData::Window(_) => Err(Error::InvalidArgument("not a sequence task".into())),
    }
}

fn cmd_decode(common: &Common, checkpoint: &Path, split: Split, lm: LmChoice, lambda: f64) -> Result<()> {
    let (spec, dir) = common.load()?;
    let model = checkpoint_load(checkpoint)?;
    let data = sequence_data(&spec)?;
    let k = spec.lm.as_ref().map_or(0.1, |l| l.k);
    let lm_model = match lm {
        LmChoice::None => None,
        LmChoice::InDomain => Some(bigram_lm_train(data.lm_text(LmCorpus::InDomain), data.tgt_vocab, k)?),
        LmChoice::Extended => Some(bigram_lm_train(data.lm_text(LmCorpus::Extended), data.tgt_vocab, k)?),
    };
    let scorer = lm_model.as_ref().map(|m| m as &dyn LmScorer);
    let decoded = decode_corpus(&model, split_pairs(&data, split), &spec, scorer, lambda)?;
    let rows: Vec<DecodedRow> = decoded
        .into_iter()
        .enumerate()
        .map(|(id, (tokens, score))| DecodedRow {
            id,
            tokens,
            score,
            lm_lambda: lambda,
        })
        .collect();
    let path = dir.join("decoded.jsonl");
    write_decoded_jsonl(fs::File::create(&path)?, &rows)?;
    println!("{} hypotheses written to {}", rows.len(), path.display());
    Ok(())
}

fn cmd_eval(common: &Common, checkpoint: &Path, split: Split) -> Result<()> {
    let (spec, dir) = common.load()?;
    let config_hash = spec.config_hash()?;
    let mut reports = Vec::new();
    match prepare_task(&spec, spec.seeds[0])? {
        TaskData::Sequence(data) => {
            let model = checkpoint_load(checkpoint)?;
            let pairs = split_pairs(&data, split);
            let hyps: Vec<Vec<usize>> = decode_corpus(&model, pairs, &spec, None, 0.0)?
                .into_iter()
                .map(|(t, _)| t)
                .collect();
            let refs: Vec<Vec<usize>> = pairs.iter().map(|p| p.tgt.clone()).collect();
            for (metric, value) in sequence_metrics(&refs, &hyps)? {
                reports.push(MetricReport {
                    metric: metric.into(),
                    value,
                    n_utterances: refs.len(),
                    config_hash: config_hash.clone(),
                });
            }
        }
        TaskData::Window(data) => {
            let setting = pick_setting(&spec, None)?;
            let mut model = WindowClassifier::new(window_config_for(&spec, &setting), &data.spec, 0)?;
            model.params.load_from(&load_params(checkpoint)?)?;
            let samples = match split {
                Split::Dev => &data.dev,
                Split::Test => &data.test,
            };
            reports.push(MetricReport {
                metric: "accuracy".into(),
                value: model.accuracy(samples)?,
                n_utterances: samples.len(),
                config_hash,
            });
        }
    }
    let text = serde_json::to_string_pretty(&reports)?;
    fs::write(dir.join("eval.json"), &text)?;
    println!("{text}");
    Ok(())
}

fn cmd_experiment(common: &Common) -> Result<()> {
    let (spec, dir) = common.load()?;
    let outcome = run_experiment(&spec, &dir, common.workers)?;
    print!("{}", fs::read_to_string(dir.join("summary.md"))?);
    println!(
        "\n{} cells, {} failed; results in {}",
        outcome.manifest.cells,
        outcome.manifest.failed,
        dir.display()
    );
    Ok(())
}

fn cmd_sweep(common: &Common, site: Site, grid: Option<&[f64]>) -> Result<()> {
    let (spec, dir) = common.load()?;
    let site = match site {
        Site::SelfAttn => RelaxSite::SelfAttn,
        Site::Cross => RelaxSite::Cross,
    };
    let grid = grid.map_or_else(|| default_gamma_grid(site), <[f64]>::to_vec);
    let rows = gamma_sweep(&spec, site, &grid, &dir, common.workers)?;
    for r in &rows {
        println!("{} γ={} seed={} {}={:.4}", r.site, r.gamma, r.seed, r.metric, r.value);
    }
    println!("wrote {}", dir.join(format!("sweep_{}.csv", site.as_str())).display());
    Ok(())
}

fn cmd_report_ilm(results: &Path, metric: &str, out: Option<&Path>) -> Result<()> {
    let rows = read_results(results)?;
    let report = ilm_suppression_report(&rows, metric)?;
    let dir = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| results.parent().map(Path::to_path_buf).unwrap_or_default());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("ilm_report.json"), serde_json::to_string_pretty(&report)?)?;
    let md = ilm_markdown(&report, metric);
    fs::write(dir.join("ilm_report.md"), &md)?;
    print!("{md}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Train { common, setting } => cmd_train(common, setting.as_deref()),
        Command::Decode {
            common,
            checkpoint,
            split,
            lm,
            lambda,
        } => cmd_decode(common, checkpoint, *split, *lm, *lambda),
        Command::Eval {
            common,
            checkpoint,
            split,
        } => cmd_eval(common, checkpoint, *split),
        Command::Experiment { common } => cmd_experiment(common),
        Command::SweepGamma { common, site, grid } => cmd_sweep(common, *site, grid.as_deref()),
        Command::ReportIlm { results, metric, out } => cmd_report_ilm(results, metric, out.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
