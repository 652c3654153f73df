//! Seeded experiment cells (relaxation setting × seed), run on a worker
//! pool and merged in a fixed order.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::attention::RelaxMode;
use crate::decoding::{beam_search, bigram_lm_train, strip_eos, BeamConfig, BigramLm, LmScorer};
use crate::error::{invalid, Error, Result};
use crate::harness::spec::{ExperimentSpec, LmCorpus, RelaxSetting, RelaxSite, TaskKind};
use crate::harness::tasks::{gen_copy_task, gen_reverse_task, gen_toy_translate};
use crate::harness::window_classify::{
    gen_window_classify, train_window_classifier, WindowClassifier, WindowDataset, WindowModelConfig,
};
use crate::metrics::{corpus_bleu, wer};
use crate::rng::RngStream;
use crate::training::{train, MetricsRow, Pair, TrainConfig};
use crate::transformer::{Model, ModelConfig};
use crate::Phase;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "RELAXATT_OUTPUT_ROOT";

pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Explicit directory, else the spec's `output_dir`, else
/// `<output root>/<spec name>`.
pub fn resolve_output_dir(spec: &ExperimentSpec, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| spec.output_dir.clone())
        .unwrap_or_else(|| default_output_root().join(&spec.name))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub setting: String,
    pub seed: u64,
    /// `none`, `in-domain` or `extended`.
    pub lm: String,
    pub lambda: f64,
    pub split: String,
    pub metric: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Parallel corpora plus LM text for a sequence task.
#[derive(Clone, Debug)]
pub struct SequenceData {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub train: Vec<Pair>,
    pub dev: Vec<Pair>,
    pub test: Vec<Pair>,
    pub in_domain_text: Vec<Vec<usize>>,
    pub extended_text: Vec<Vec<usize>>,
}

impl SequenceData {
    pub fn lm_text(&self, corpus: LmCorpus) -> &[Vec<usize>] {
        match corpus {
            LmCorpus::InDomain => &self.in_domain_text,
            LmCorpus::Extended => &self.extended_text,
        }
    }

    fn longest(&self) -> usize {
        self.train
            .iter()
            .chain(&self.dev)
            .chain(&self.test)
            .map(|p| p.src.len().max(p.tgt.len()))
            .max()
            .unwrap_or(0)
    }
}

#[derive(Clone, Debug)]
pub enum TaskData {
    Sequence(SequenceData),
    Window(WindowDataset),
}

/// Generates the data of one seed. Every relaxation setting sees the same
/// data for a given seed.
pub fn prepare_task(spec: &ExperimentSpec, seed: u64) -> Result<TaskData> {
    let mut rng = RngStream::new(seed, "data");
    let seq = &spec.data.sequence;
    let plain = |pairs: fn(&mut RngStream, usize, usize, usize) -> Result<Vec<Pair>>, rng: &mut RngStream| {
        let train = pairs(rng, seq.vocab, seq.len, seq.n_train)?;
        let dev = pairs(rng, seq.vocab, seq.len, seq.n_dev)?;
        let test = pairs(rng, seq.vocab, seq.len, seq.n_test)?;
        let text: Vec<Vec<usize>> = train.iter().map(|p| p.tgt.clone()).collect();
        Ok::<_, Error>(TaskData::Sequence(SequenceData {
            src_vocab: seq.vocab,
            tgt_vocab: seq.vocab,
            train,
            dev,
            test,
            in_domain_text: text.clone(),
            extended_text: text,
        }))
    };
    match spec.task {
        TaskKind::Copy => plain(gen_copy_task, &mut rng),
        TaskKind::Reverse => plain(gen_reverse_task, &mut rng),
        TaskKind::ToyTranslate => {
            let t = gen_toy_translate(&mut rng, &spec.data.toy_translate)?;
            Ok(TaskData::Sequence(SequenceData {
                src_vocab: t.src_vocab,
                tgt_vocab: t.tgt_vocab,
                train: t.train,
                dev: t.dev,
                test: t.test,
                in_domain_text: t.in_domain_text,
                extended_text: t.extended_text,
            }))
        }
        TaskKind::WindowClassify => Ok(TaskData::Window(gen_window_classify(&mut rng, &spec.data.window)?)),
    }
}

/// The model configuration a cell trains: vocabulary sizes and length
/// limit come from the data, relaxation from the setting.
pub fn model_config_for(spec: &ExperimentSpec, setting: &RelaxSetting, data: &SequenceData) -> ModelConfig {
    let (relax_self, relax_cross) = setting.configs();
    ModelConfig {
        src_vocab: data.src_vocab,
        vocab_size: data.tgt_vocab,
        max_len: spec.model.max_len.max(data.longest() + spec.decode.extra_len + 2),
        relax_self,
        relax_cross,
        ..spec.model.clone()
    }
}

pub fn window_config_for(spec: &ExperimentSpec, setting: &RelaxSetting) -> WindowModelConfig {
    WindowModelConfig {
        relax: setting.configs().0,
        ..spec.window_model.clone()
    }
}

#[derive(Clone, Debug)]
pub enum TrainedModel {
    Sequence(Model),
    Window(WindowClassifier),
}

#[derive(Clone, Debug)]
pub struct TrainedCell {
    pub model: TrainedModel,
    pub data: TaskData,
    pub log: Vec<MetricsRow>,
    pub window_losses: Vec<f64>,
}

/// Trains one cell. Model init, data order and dropout all derive from `seed`.
pub fn train_cell(spec: &ExperimentSpec, setting: &RelaxSetting, seed: u64) -> Result<TrainedCell> {
    let data = prepare_task(spec, seed)?;
    match &data {
        TaskData::Sequence(seq) => {
            let mut model = Model::new(model_config_for(spec, setting, seq), seed)?;
            let cfg = TrainConfig {
                seed,
                ..spec.train.clone()
            };
            let report = train(&mut model, &seq.train, &seq.dev, &cfg)?;
            Ok(TrainedCell {
                model: TrainedModel::Sequence(model),
                data,
                log: report.log,
                window_losses: Vec::new(),
            })
        }
        TaskData::Window(win) => {
            let mut model = WindowClassifier::new(window_config_for(spec, setting), &win.spec, seed)?;
            let cfg = crate::harness::window_classify::WindowTrainConfig {
                seed,
                ..spec.window_train.clone()
            };
            let losses = train_window_classifier(&mut model, &win.train, &cfg)?;
            Ok(TrainedCell {
                model: TrainedModel::Window(model),
                data,
                log: Vec::new(),
                window_losses: losses,
            })
        }
    }
}

/// Best hypothesis per source, EOS stripped.
pub fn decode_corpus(
    model: &Model,
    pairs: &[Pair],
    spec: &ExperimentSpec,
    lm: Option<&dyn LmScorer>,
    lambda: f64,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let mut enc_rng = RngStream::new(0, "eval");
    pairs
        .iter()
        .map(|p| {
            let h = model.encode(&p.src, Phase::Eval, &mut enc_rng)?;
            let cfg = BeamConfig {
                beam: spec.decode.beam,
                lambda,
                max_len: p.src.len() + spec.decode.extra_len,
                eos_margin: spec.decode.eos_margin,
                length_norm: spec.decode.length_norm,
            };
            let best = beam_search(model, &h, &cfg, lm)?.swap_remove(0);
            Ok((strip_eos(&best.tokens).to_vec(), best.score))
        })
        .collect()
}

fn references(pairs: &[Pair]) -> Vec<Vec<usize>> {
    pairs.iter().map(|p| p.tgt.clone()).collect()
}

/// `(metric, value)` for word error rate, BLEU and exact-match accuracy.
pub fn sequence_metrics(refs: &[Vec<usize>], hyps: &[Vec<usize>]) -> Result<Vec<(&'static str, f64)>> {
    let exact = refs.iter().zip(hyps).filter(|(r, h)| r == h).count() as f64 / refs.len().max(1) as f64;
    Ok(vec![
        ("wer", wer(refs, hyps)?),
        ("bleu", corpus_bleu(refs, hyps, 4)?),
        ("seq_acc", exact),
    ])
}

/// Which splits a cell evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CellMode {
    /// Dev tuning of λ, then the test split once per LM option.
    Full,
    /// Dev metric without LM only.
    DevOnly,
}

#[derive(Clone, Debug, Default)]
pub struct CellOutput {
    pub rows: Vec<ResultRow>,
    pub tuning: Vec<ResultRow>,
    pub log: Vec<MetricsRow>,
}

fn row(setting: &str, seed: u64, lm: &str, lambda: f64, split: &str, metric: &str, value: f64) -> ResultRow {
    ResultRow {
        setting: setting.into(),
        seed,
        lm: lm.into(),
        lambda,
        split: split.into(),
        metric: metric.into(),
        value,
        error: None,
    }
}

/// Name of the dev metric reported by [`CellMode::DevOnly`] cells.
pub fn dev_metric_name(task: TaskKind) -> &'static str {
    if task.is_sequence() {
        "wer"
    } else {
        "error_rate"
    }
}

pub fn run_cell(spec: &ExperimentSpec, setting: &RelaxSetting, seed: u64, mode: CellMode) -> Result<CellOutput> {
    let cell = train_cell(spec, setting, seed)?;
    let label = setting.label();
    let mut out = CellOutput {
        log: cell.log,
        ..Default::default()
    };
    match (&cell.model, &cell.data) {
        (TrainedModel::Sequence(model), TaskData::Sequence(data)) => {
            let dev_refs = references(&data.dev);
            let dev_hyps: Vec<Vec<usize>> = decode_corpus(model, &data.dev, spec, None, 0.0)?
                .into_iter()
                .map(|(t, _)| t)
                .collect();
            out.tuning.push(row(&label, seed, "none", 0.0, "dev", "wer", wer(&dev_refs, &dev_hyps)?));
            if mode == CellMode::DevOnly {
                out.rows = out.tuning.clone();
                return Ok(out);
            }
            let test_refs = references(&data.test);
            let decode_test = |lm: Option<&dyn LmScorer>, lambda: f64| -> Result<Vec<Vec<usize>>> {
                Ok(decode_corpus(model, &data.test, spec, lm, lambda)?
                    .into_iter()
                    .map(|(t, _)| t)
                    .collect())
            };
            for (metric, value) in sequence_metrics(&test_refs, &decode_test(None, 0.0)?)? {
                out.rows.push(row(&label, seed, "none", 0.0, "test", metric, value));
            }
            if let Some(lm_spec) = &spec.lm {
                for &corpus in &lm_spec.corpora {
                    let lm: BigramLm = bigram_lm_train(data.lm_text(corpus), data.tgt_vocab, lm_spec.k)?;
                    let mut best: Option<(f64, f64)> = None;
                    for &lambda in &lm_spec.lambdas {
                        let hyps: Vec<Vec<usize>> = decode_corpus(model, &data.dev, spec, Some(&lm), lambda)?
                            .into_iter()
                            .map(|(t, _)| t)
                            .collect();
                        let w = wer(&dev_refs, &hyps)?;
                        out.tuning.push(row(&label, seed, corpus.as_str(), lambda, "dev", "wer", w));
                        if best.is_none_or(|(bw, _)| w < bw) {
                            best = Some((w, lambda));
                        }
                    }
                    let (_, lambda) = best.expect("λ grid is non-empty");
                    for (metric, value) in sequence_metrics(&test_refs, &decode_test(Some(&lm), lambda)?)? {
                        out.rows.push(row(&label, seed, corpus.as_str(), lambda, "test", metric, value));
                    }
                }
            }
        }
        (TrainedModel::Window(model), TaskData::Window(data)) => {
            let dev_err = 1.0 - model.accuracy(&data.dev)?;
            out.tuning.push(row(&label, seed, "none", 0.0, "dev", "error_rate", dev_err));
            if mode == CellMode::DevOnly {
                out.rows = out.tuning.clone();
                return Ok(out);
            }
            let acc = model.accuracy(&data.test)?;
            out.rows.push(row(&label, seed, "none", 0.0, "test", "accuracy", acc));
            out.rows.push(row(&label, seed, "none", 0.0, "test", "error_rate", 1.0 - acc));
        }
        _ => unreachable!("model kind follows task kind"),
    }
    Ok(out)
}

/// Runs `cells` on `workers` threads; output order matches `cells`.
pub fn run_cells(
    spec: &ExperimentSpec,
    cells: &[(RelaxSetting, u64)],
    workers: usize,
    mode: CellMode,
) -> Vec<Result<CellOutput>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<CellOutput>>>> = Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, cells.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((setting, seed)) = cells.get(i) else {
                    break;
                };
                let res = run_cell(spec, setting, *seed, mode);
                slots.lock().expect("worker panicked")[i] = Some(res);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every cell ran"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setting: String,
    pub lm: String,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
    pub n: usize,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean ± std across seeds of every test metric, in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in rows.iter().filter(|r| r.split == "test" && r.error.is_none()) {
        let key = (r.setting.clone(), r.lm.clone(), r.metric.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(setting, lm, metric)| {
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| r.split == "test" && r.error.is_none())
                .filter(|r| r.setting == setting && r.lm == lm && r.metric == metric)
                .map(|r| r.value)
                .collect();
            let (mean, std) = mean_std(&values);
            SummaryRow {
                setting,
                lm,
                metric,
                mean,
                std,
                n: values.len(),
            }
        })
        .collect()
}

pub fn summary_markdown(spec: &ExperimentSpec, summary: &[SummaryRow]) -> String {
    let mut s = format!(
        "# {}\n\nTask: {:?}. Seeds: {:?}. Values are mean ± std over seeds on the test split; \
         relaxation and λ are selected on the dev split.\n\n| setting | LM | metric | mean ± std | n |\n|---|---|---|---|---|\n",
        spec.name, spec.task, spec.seeds
    );
    for r in summary {
        let _ = writeln!(s, "| {} | {} | {} | {:.4} ± {:.4} | {} |", r.setting, r.lm, r.metric, r.mean, r.std, r.n);
    }
    s
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub cells: usize,
    pub failed: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub tuning: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub manifest: Manifest,
}

fn file_stem(setting: &str, seed: u64) -> String {
    let safe: String = setting
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}_seed{seed}")
}

/// Trains and evaluates every (setting × seed) cell and writes
/// `spec.toml`, `results.jsonl`, `tuning.jsonl`, `summary.json`,
/// `summary.md`, `manifest.json` and per-cell training logs into `dir`.
/// A failing cell is recorded as a `failed` row; the others still run.
pub fn run_experiment(spec: &ExperimentSpec, dir: &Path, workers: usize) -> Result<ExperimentOutcome> {
    spec.validate()?;
    fs::create_dir_all(dir.join("logs"))?;
    fs::write(dir.join("spec.toml"), spec.to_toml()?)?;
    let cells: Vec<(RelaxSetting, u64)> = spec
        .relax
        .iter()
        .flat_map(|r| spec.seeds.iter().map(move |&s| (r.clone(), s)))
        .collect();
    let outputs = run_cells(spec, &cells, workers, CellMode::Full);

    let mut rows = Vec::new();
    let mut tuning = Vec::new();
    let mut failed = 0;
    for ((setting, seed), out) in cells.iter().zip(outputs) {
        match out {
            Ok(out) => {
                write_jsonl(&dir.join("logs").join(format!("{}.jsonl", file_stem(&setting.label(), *seed))), &out.log)?;
                rows.extend(out.rows);
                tuning.extend(out.tuning);
            }
            Err(e) => {
                failed += 1;
                rows.push(ResultRow {
                    error: Some(e.to_string()),
                    ..row(&setting.label(), *seed, "none", 0.0, "test", "failed", 0.0)
                });
            }
        }
    }
    write_jsonl(&dir.join("results.jsonl"), &rows)?;
    write_jsonl(&dir.join("tuning.jsonl"), &tuning)?;
    let summary = summarize(&rows);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    fs::write(dir.join("summary.md"), summary_markdown(spec, &summary))?;
    let manifest = Manifest {
        name: spec.name.clone(),
        config_hash: spec.config_hash()?,
        cells: cells.len(),
        failed,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(ExperimentOutcome {
        dir: dir.to_path_buf(),
        rows,
        tuning,
        summary,
        manifest,
    })
}

/// LM-induced improvement per approach: `metric(no LM) − metric(LM)` on
/// the test split, per seed and as the median over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlmRow {
    pub approach: String,
    pub seeds: Vec<u64>,
    pub no_lm: f64,
    pub in_domain_reduction: f64,
    pub extended_reduction: f64,
    pub no_lm_per_seed: Vec<f64>,
    pub in_domain_per_seed: Vec<f64>,
    pub extended_per_seed: Vec<f64>,
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn ilm_suppression_report(rows: &[ResultRow], metric: &str) -> Result<Vec<IlmRow>> {
    let test: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| r.split == "test" && r.metric == metric && r.error.is_none())
        .collect();
    let mut approaches: Vec<&str> = Vec::new();
    for r in &test {
        if !approaches.contains(&r.setting.as_str()) {
            approaches.push(&r.setting);
        }
    }
    if approaches.is_empty() {
        return Err(Error::MissingCell(format!("no test rows for metric {metric}")));
    }
    let lookup = |setting: &str, seed: u64, lm: &str| -> Result<f64> {
        test.iter()
            .find(|r| r.setting == setting && r.seed == seed && r.lm == lm)
            .map(|r| r.value)
            .ok_or_else(|| Error::MissingCell(format!("{setting} seed {seed} lm {lm}")))
    };
    approaches
        .into_iter()
        .map(|approach| {
            let mut seeds: Vec<u64> = test.iter().filter(|r| r.setting == approach).map(|r| r.seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            let mut base = Vec::new();
            let mut ind = Vec::new();
            let mut ext = Vec::new();
            for &seed in &seeds {
                let none = lookup(approach, seed, "none")?;
                base.push(none);
                ind.push(none - lookup(approach, seed, LmCorpus::InDomain.as_str())?);
                ext.push(none - lookup(approach, seed, LmCorpus::Extended.as_str())?);
            }
            Ok(IlmRow {
                approach: approach.to_string(),
                seeds,
                no_lm: median(&base),
                in_domain_reduction: median(&ind),
                extended_reduction: median(&ext),
                no_lm_per_seed: base,
                in_domain_per_seed: ind,
                extended_per_seed: ext,
            })
        })
        .collect()
}

pub fn ilm_markdown(report: &[IlmRow], metric: &str) -> String {
    let mut s = format!(
        "| approach | {metric} without LM | reduction, in-domain LM | reduction, extended LM |\n|---|---|---|---|\n"
    );
    for r in report {
        let _ = writeln!(
            s,
            "| {} | {:.4} | {:+.4} | {:+.4} |",
            r.approach, r.no_lm, r.in_domain_reduction, r.extended_reduction
        );
    }
    s.push_str("\nMedians over seeds; reduction = metric without LM − metric with the dev-selected λ.\n");
    s
}

/// Grid searched for relaxation of `site`, preceded by 0.
pub fn default_gamma_grid(site: RelaxSite) -> Vec<f64> {
    match site {
        RelaxSite::SelfAttn => vec![0.0, 0.0001, 0.001, 0.01, 0.05, 0.1],
        _ => vec![0.0, 0.1, 0.15, 0.2, 0.25, 0.3],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub site: String,
    pub gamma: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// Dev metric for every (γ × seed) at `site`, using the relaxation mode of
/// the first relaxed setting in the spec (matched otherwise). Writes
/// `sweep_<site>.csv` into `dir`.
pub fn gamma_sweep(
    spec: &ExperimentSpec,
    site: RelaxSite,
    grid: &[f64],
    dir: &Path,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    if site == RelaxSite::None {
        return Err(invalid("sweep site must name an attention site"));
    }
    if !grid.contains(&0.0) {
        return Err(invalid("γ grid must include 0"));
    }
    if spec.task == TaskKind::WindowClassify && site != RelaxSite::SelfAttn {
        return Err(invalid("window classification only has self-attention"));
    }
    let mode = spec
        .relax
        .iter()
        .find(|r| r.site != RelaxSite::None)
        .map_or(RelaxMode::Matched, |r| r.mode);
    let cells: Vec<(RelaxSetting, u64)> = grid
        .iter()
        .flat_map(|&g| spec.seeds.iter().map(move |&s| (RelaxSetting::at(site, g, mode), s)))
        .collect();
    let metric = dev_metric_name(spec.task);
    let mut rows = Vec::with_capacity(cells.len());
    for ((setting, seed), out) in cells.iter().zip(run_cells(spec, &cells, workers, CellMode::DevOnly)) {
        let out = out?;
        let value = out.rows.first().map(|r| r.value).ok_or_else(|| invalid("cell produced no rows"))?;
        rows.push(SweepRow {
            site: site.as_str().into(),
            gamma: setting.gamma,
            seed: *seed,
            metric: format!("dev_{metric}"),
            value,
        });
    }
    fs::create_dir_all(dir)?;
    let mut csv = String::from("site,gamma,seed,metric,value\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{}", r.site, r.gamma, r.seed, r.metric, r.value);
    }
    fs::write(dir.join(format!("sweep_{}.csv", site.as_str())), csv)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(setting: &str, seed: u64, lm: &str, value: f64) -> ResultRow {
        row(setting, seed, lm, 0.1, "test", "wer", value)
    }

    #[test]
    fn ilm_report_hand_computed() {
        let rows = vec![
            r("baseline", 0, "none", 0.30),
            r("baseline", 0, "in-domain", 0.29),
            r("baseline", 0, "extended", 0.25),
            r("cross", 0, "none", 0.32),
            r("cross", 0, "in-domain", 0.32),
            r("cross", 0, "extended", 0.22),
        ];
        let rep = ilm_suppression_report(&rows, "wer").unwrap();
        assert_eq!(rep.len(), 2);
        assert!((rep[0].extended_reduction - 0.05).abs() < 1e-15);
        assert!((rep[0].in_domain_reduction - 0.01).abs() < 1e-15);
        assert!((rep[1].extended_reduction - 0.10).abs() < 1e-15);
        assert!(ilm_suppression_report(&rows[..2], "wer").is_err());
    }

    #[test]
    fn summary_mean_std() {
        let rows = vec![r("a", 0, "none", 1.0), r("a", 1, "none", 3.0)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].mean, 2.0);
        assert!((s[0].std - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn output_dir_resolution() {
        let mut spec = ExperimentSpec::preset("demo", TaskKind::Copy);
        assert_eq!(resolve_output_dir(&spec, Some(Path::new("/x"))), PathBuf::from("/x"));
        spec.output_dir = Some(PathBuf::from("/y"));
        assert_eq!(resolve_output_dir(&spec, None), PathBuf::from("/y"));
    }
}
