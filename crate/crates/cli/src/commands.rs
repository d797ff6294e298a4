use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rmft_core::corpus::{load_corpus, save_corpus, split_corpus, Corpus};
use rmft_core::dedup::dedup_corpus;
use rmft_core::masking::{apply_masks, build_part_stores, load_host_list, plan_masks};
use rmft_core::memproxy::{read_artifacts_jsonl, simulate, write_artifacts_jsonl, CheckpointArtifact};
use rmft_core::metrics::{
    evaluate_run, read_series_csv, summarize, write_series_csv, write_summary_csv, CheckpointMetrics,
    OriginalEmailSet,
};
use rmft_core::pareto::{aurc, maxter_curve, tradeoff_points, write_aurc_csv, AurcRow};
use rmft_core::pii::{build_index_table, frequency_report, unique_emails, IndexTable};
use rmft_core::synthetic::prefix_prompts;
use serde::Serialize;
use walkdir::WalkDir;

use crate::config::{RunConfig, Technique};
use crate::InvariantViolation;

/// Where every stage reads and writes inside a run directory.
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn default_corpus(&self) -> PathBuf {
        self.root.join("corpus.jsonl")
    }

    pub fn split(&self, name: &str) -> PathBuf {
        self.root.join("splits").join(format!("{name}.jsonl"))
    }

    /// Training corpus of a technique.
    pub fn training(&self, t: Technique) -> PathBuf {
        match t {
            Technique::Baseline => self.split("train"),
            Technique::Rmft => self.root.join("rmft/train.jsonl"),
            Technique::Dedup => self.root.join("dedup/train.jsonl"),
        }
    }

    pub fn artifacts(&self, t: Technique) -> PathBuf {
        self.root.join(format!("simulate/{}.artifacts.jsonl", t.label()))
    }

    pub fn series(&self, t: Technique) -> PathBuf {
        self.root.join(format!("eval/{}.series.csv", t.label()))
    }

    fn stage_dir(&self, stage: &str) -> Result<PathBuf> {
        let dir = self.root.join(stage);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn record_config(&self, stage: &str, cfg: &RunConfig) -> Result<()> {
        let dir = self.stage_dir("config")?;
        write_text(&dir.join(format!("{stage}.conf")), &cfg.to_text())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn load(path: &Path) -> Result<Corpus> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn save(corpus: &Corpus, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    save_corpus(corpus, path).with_context(|| format!("writing corpus {}", path.display()))
}

/// Reads every regular file under `raw_dir` (sorted by path) as one message.
pub fn ingest(raw_dir: &Path, out: &Path) -> Result<usize> {
    if !raw_dir.is_dir() {
        bail!("{} is not a directory", raw_dir.display());
    }
    let mut corpus = Corpus::new("corpus");
    for entry in WalkDir::new(raw_dir).sort_by_file_name() {
        let entry = entry?;
        if !entry.file_type().is_file() {
            continue;
        }
        let bytes = fs::read(entry.path()).with_context(|| format!("reading {}", entry.path().display()))?;
        corpus.push_text(&String::from_utf8_lossy(&bytes).replace("\r\n", "\n"));
    }
    if corpus.is_empty() {
        eprintln!("warning: no messages found under {}", raw_dir.display());
    }
    save(&corpus, out)?;
    Ok(corpus.len())
}

#[derive(Serialize)]
struct SplitSummary {
    train: usize,
    val: usize,
    test: usize,
    seed: u64,
}

/// Splits the corpus, then writes the top-`k` frequency table and the
/// emails shared by the train and test splits.
pub fn eda(layout: &Layout, cfg: &RunConfig, k: usize) -> Result<()> {
    let corpus_path = cfg.corpus.clone().unwrap_or_else(|| layout.default_corpus());
    let corpus = load(&corpus_path)?;
    let spec = cfg.split_spec(corpus.len());
    let splits = split_corpus(&corpus, &spec)?;
    save(&splits.train, &layout.split("train"))?;
    save(&splits.val, &layout.split("val"))?;
    save(&splits.test, &layout.split("test"))?;

    let dir = layout.stage_dir("eda")?;
    let full = build_index_table(&corpus);
    frequency_report(&full, k).write_csv(create(&dir.join("frequency.csv"))?)?;

    let train = build_index_table(&splits.train);
    let test = build_index_table(&splits.test);
    let train_counts = train.counts();
    let test_counts = test.counts();
    let mut w = csv::Writer::from_writer(create(&dir.join("overlap.csv"))?);
    w.write_record(["email", "train_count", "test_count"])?;
    for e in rmft_core::pii::overlapping_emails(&train, &test) {
        w.write_record([
            e.canonical().to_owned(),
            train_counts[&e].to_string(),
            test_counts[&e].to_string(),
        ])?;
    }
    w.flush()?;
    write_json(
        &dir.join("splits.json"),
        &SplitSummary {
            train: spec.train_n,
            val: spec.val_n,
            test: spec.test_n,
            seed: spec.seed,
        },
    )?;
    layout.record_config("eda", cfg)
}

#[derive(Serialize)]
struct MaskSummary {
    datapoints: usize,
    rows_before: usize,
    rows_after: usize,
    unique_before: usize,
    replaced: usize,
    max_count_after: usize,
    seed: u64,
}

pub fn mask(layout: &Layout, cfg: &RunConfig) -> Result<()> {
    let train = load(&layout.split("train"))?;
    let table = build_index_table(&train);
    let extra = match &cfg.domain_list {
        Some(p) => load_host_list(p)?,
        None => Vec::new(),
    };
    let stores = build_part_stores(&table, &extra)?;
    let plan = plan_masks(&table, &stores, cfg.seed)?;
    let masked = apply_masks(&train, &plan)?;
    let after = build_index_table(&masked.corpus);

    let dir = layout.stage_dir("rmft")?;
    save(&masked.corpus, &dir.join("train.jsonl"))?;
    plan.write_csv(create(&dir.join("plan.csv"))?)?;
    let mut prov = create(&dir.join("provenance.jsonl"))?;
    masked.write_provenance_jsonl(&mut prov)?;
    prov.flush()?;
    let summary = MaskSummary {
        datapoints: train.len(),
        rows_before: table.len(),
        rows_after: after.len(),
        unique_before: unique_emails(&table).len(),
        replaced: plan.replaced(),
        max_count_after: after.max_count(),
        seed: cfg.seed,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    layout.record_config("mask", cfg)?;

    if summary.rows_after != summary.rows_before {
        return Err(InvariantViolation(format!(
            "masking changed the occurrence count: {} -> {}",
            summary.rows_before, summary.rows_after
        ))
        .into());
    }
    if summary.max_count_after > 1 {
        return Err(InvariantViolation(format!(
            "an email still occurs {} times after masking",
            summary.max_count_after
        ))
        .into());
    }
    Ok(())
}

#[derive(Serialize)]
struct DedupSummary {
    datapoints: usize,
    headers_removed: usize,
    headers_retained: usize,
    header_rows_before: usize,
    header_rows_after: usize,
    emails_eliminated: usize,
    removed_datapoints: Vec<usize>,
}

pub fn dedup(layout: &Layout, cfg: &RunConfig) -> Result<()> {
    let train = load(&layout.split("train"))?;
    let table = build_index_table(&train);
    let (out, report) = dedup_corpus(&train, &table);
    let after = build_index_table(&out);

    let dir = layout.stage_dir("dedup")?;
    save(&out, &dir.join("train.jsonl"))?;
    write_json(
        &dir.join("report.json"),
        &DedupSummary {
            datapoints: train.len(),
            headers_removed: report.removed_headers.len(),
            headers_retained: report.retained,
            header_rows_before: table.header_rows().count(),
            header_rows_after: after.header_rows().count(),
            emails_eliminated: report.emails_eliminated.len(),
            removed_datapoints: report.removed_headers.clone(),
        },
    )?;
    layout.record_config("dedup", cfg)?;

    let mut header_counts: BTreeMap<_, usize> = BTreeMap::new();
    for r in after.header_rows() {
        *header_counts.entry(&r.email).or_default() += 1;
    }
    if let Some((e, n)) = header_counts.iter().find(|(_, &n)| n > 1) {
        return Err(InvariantViolation(format!("{e} occurs in {n} headers after dedup")).into());
    }
    if let Some((a, _)) = train.iter().zip(&out).find(|(a, b)| a.body() != b.body()) {
        return Err(InvariantViolation(format!("body of datapoint {} changed", a.id())).into());
    }
    if !dedup_corpus(&out, &after).1.removed_headers.is_empty() {
        return Err(InvariantViolation("dedup is not idempotent".into()).into());
    }
    Ok(())
}

fn read_prompts(cfg: &RunConfig, train: &Corpus) -> Result<Vec<String>> {
    match &cfg.prompt_file {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading prompts {}", p.display()))?;
            Ok(text
                .lines()
                .filter(|l| !l.is_empty())
                .take(cfg.prompt_limit)
                .map(str::to_owned)
                .collect())
        }
        None => Ok(prefix_prompts(train, cfg.prompt_len, cfg.prompt_limit)),
    }
}

/// Trains the proxy on every selected technique's corpus with the same
/// prompts and perplexity texts.
pub fn simulate_all(layout: &Layout, cfg: &RunConfig) -> Result<()> {
    let train = load(&layout.split("train"))?;
    let test = load(&layout.split("test"))?;
    let prompts = read_prompts(cfg, &train)?;
    if prompts.is_empty() {
        bail!("no prompts available");
    }
    let eval_texts: Vec<String> = test
        .iter()
        .map(|d| d.text().to_owned())
        .filter(|t| t.len() >= cfg.order)
        .collect();
    if eval_texts.is_empty() {
        bail!("test split has no text of at least {} bytes for perplexity", cfg.order);
    }

    let dir = layout.stage_dir("simulate")?;
    write_json(&dir.join("prompts.json"), &prompts)?;
    for &t in &cfg.techniques {
        let corpus = load(&layout.training(t))?;
        let arts = simulate(&corpus, &cfg.schedule(), &cfg.simulation(), &prompts, &eval_texts)?;
        let mut w = create(&layout.artifacts(t))?;
        write_artifacts_jsonl(&arts, &mut w)?;
        w.flush()?;
    }
    layout.record_config("simulate", cfg)
}

fn read_artifacts(path: &Path) -> Result<Vec<CheckpointArtifact>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_artifacts_jsonl(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

/// Per-checkpoint series and the run-level summary table.
pub fn eval(layout: &Layout, cfg: &RunConfig) -> Result<()> {
    let train = load(&layout.split("train"))?;
    let og = OriginalEmailSet::from_table(&build_index_table(&train));
    let baseline = read_artifacts(&layout.artifacts(Technique::Baseline))?;
    let dir = layout.stage_dir("eval")?;
    let mut rows = Vec::new();
    for &t in &cfg.techniques {
        let arts = if t == Technique::Baseline {
            baseline.clone()
        } else {
            read_artifacts(&layout.artifacts(t))?
        };
        let table: IndexTable = build_index_table(&load(&layout.training(t))?);
        let series = evaluate_run(&arts, &baseline, &og, &table)?;
        write_series_csv(&series, create(&layout.series(t))?)?;
        rows.push((t.label().to_owned(), summarize(&series)?));
    }
    write_summary_csv(&rows, create(&dir.join("summary.csv"))?)?;
    layout.record_config("eval", cfg)
}

fn read_series(path: &Path) -> Result<Vec<CheckpointMetrics>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_series_csv(f).with_context(|| format!("reading {}", path.display()))
}

/// MaxTER curves and AURC for every non-baseline technique.
pub fn maxter(layout: &Layout, cfg: &RunConfig) -> Result<()> {
    let baseline = read_series(&layout.series(Technique::Baseline))?;
    let grid = cfg.tau_grid();
    let dir = layout.stage_dir("maxter")?;
    let mut rows = vec![AurcRow {
        technique: Technique::Baseline.label().to_owned(),
        dataset: cfg.dataset.clone(),
        avg_ppl: summarize(&baseline)?.avg_ppl,
        aurc: None,
    }];
    for &t in cfg.techniques.iter().filter(|&&t| t != Technique::Baseline) {
        let series = read_series(&layout.series(t))?;
        let (points, skipped) = tradeoff_points(t.label(), &series, &baseline)?;
        if skipped > 0 {
            eprintln!(
                "{}: {skipped} checkpoint(s) skipped, baseline extracted nothing there",
                t.label()
            );
        }
        let mut w = csv::Writer::from_writer(create(&dir.join(format!("{}.points.csv", t.label())))?);
        w.write_record(["checkpoint", "mdp_pct", "ter_drop_pct", "ter_change_pct"])?;
        for p in &points {
            w.write_record([
                p.checkpoint_index.to_string(),
                p.mdp_pct.to_string(),
                p.ter_drop_pct.to_string(),
                p.signed_ter_change_pct().to_string(),
            ])?;
        }
        w.flush()?;
        let curve = maxter_curve(&points, &grid)?;
        curve.write_csv(create(&dir.join(format!("{}.curve.csv", t.label())))?)?;
        rows.push(AurcRow {
            technique: t.label().to_owned(),
            dataset: cfg.dataset.clone(),
            avg_ppl: summarize(&series)?.avg_ppl,
            aurc: Some(aurc(&curve).area),
        });
    }
    write_aurc_csv(&rows, create(&dir.join("aurc.csv"))?)?;
    layout.record_config("maxter", cfg)
}
