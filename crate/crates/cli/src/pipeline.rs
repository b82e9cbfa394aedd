//! The five stages. Each reads the previous stage's artifacts from the
//! output directory and writes its own.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use distillstream::corpus::{
    admit_with, explode_pairs, read_records, sort_stream, write_records, EmbeddingSidecar, MalformedPolicy,
    ReaderOptions, Rejection, StopwordRatio, TextImagePair,
};
use distillstream::dedup::{dedup_stream, DedupReport};
use distillstream::eval::{evaluate, load_benchmark, EvalMode, EvalResult, EvalSpec};
use distillstream::teacher::{gate, LexiconScorer, TeacherProvider};
use distillstream::trainer::{score_pairs, train_scored, Checkpoint, TrainConfig, TrainReport};
use distillstream::{Polarity, SentimentDistribution};

use crate::config::{LoadedConfig, TeacherConfig};

pub const ADMITTED: &str = "admitted.jsonl";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const PAIRS: &str = "pairs.jsonl";
pub const DEDUP_REPORT: &str = "dedup_report.json";
pub const LABELS: &str = "labels.jsonl";
pub const LABEL_REPORT: &str = "label_report.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const TRAIN_REPORT: &str = "train_report.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Ingest,
    Dedup,
    Label,
    Train,
    Eval,
}

impl Stage {
    /// Process exit code for a failure in this stage.
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Ingest => 3,
            Stage::Dedup => 4,
            Stage::Label => 5,
            Stage::Train => 6,
            Stage::Eval => 7,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Dedup => "dedup",
            Stage::Label => "label",
            Stage::Train => "train",
            Stage::Eval => "eval",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {cause:#}")]
pub struct StageError {
    pub stage: Stage,
    pub cause: anyhow::Error,
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|cause| StageError { stage, cause })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&raw).with_context(|| format!("parsing {}", path.display()))
}

fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    std::io::copy(&mut file, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionCounts {
    pub too_few_words: usize,
    pub not_english: usize,
    pub no_image: usize,
    pub retweet: usize,
}

impl RejectionCounts {
    fn add(&mut self, r: Rejection) {
        match r {
            Rejection::TooFewWords => self.too_few_words += 1,
            Rejection::NotEnglish => self.not_english += 1,
            Rejection::NoImage => self.no_image += 1,
            Rejection::Retweet => self.retweet += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.too_few_words + self.not_english + self.no_image + self.retweet
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub corpus_sha256: String,
    pub records_read: usize,
    pub skipped_malformed: usize,
    pub admitted: usize,
    pub rejected: RejectionCounts,
    /// Images on admitted records.
    pub pairs: usize,
}

pub fn ingest(cfg: &LoadedConfig, out: &Path) -> Result<IngestReport> {
    let c = &cfg.config;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let corpus = cfg.resolve(&c.corpus);
    let sidecar = match &c.sidecar {
        Some(s) => Some(EmbeddingSidecar::open(&cfg.resolve(&s.bin), &cfg.resolve(&s.index))?),
        None => None,
    };
    let options = ReaderOptions {
        expected_dim: c.dim,
        malformed: c.malformed,
        sidecar: sidecar.as_ref(),
    };
    let (records, skipped) = read_records(&corpus, options)?;
    let language = StopwordRatio {
        min_ratio: c.filter.english_stopword_ratio_min,
    };
    let mut rejected = RejectionCounts::default();
    let mut admitted = Vec::with_capacity(records.len());
    let records_read = records.len();
    for r in records {
        match admit_with(&r, &c.filter, &language) {
            Ok(()) => admitted.push(r),
            Err(why) => rejected.add(why),
        }
    }
    sort_stream(&mut admitted);
    write_records(&out.join(ADMITTED), &admitted)?;
    let report = IngestReport {
        corpus_sha256: sha256_file(&corpus)?,
        records_read,
        skipped_malformed: skipped,
        admitted: admitted.len(),
        rejected,
        pairs: admitted.iter().map(|r| r.images.len()).sum(),
    };
    write_json(&out.join(INGEST_REPORT), &report)?;
    Ok(report)
}

/// With `verbose`, the written report carries one decision per pair.
pub fn dedup(cfg: &LoadedConfig, out: &Path, verbose: bool) -> Result<DedupReport> {
    let c = &cfg.config;
    let options = ReaderOptions {
        malformed: MalformedPolicy::Abort,
        ..ReaderOptions::new(c.dim)
    };
    let (records, _) = read_records(&out.join(ADMITTED), options)?;
    let pairs = records.iter().flat_map(explode_pairs);
    let (kept, report) = dedup_stream(pairs, c.dim, &c.dedup)?;
    write_jsonl(&out.join(PAIRS), &kept)?;
    let report = if verbose { report } else { report.without_decisions() };
    write_json(&out.join(DEDUP_REPORT), &report)?;
    Ok(report.without_decisions())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelLine {
    pub record_id: String,
    pub image_id: String,
    pub p: SentimentDistribution,
    pub argmax: Polarity,
    /// Gate value under the configured thresholds.
    pub multiplier: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelReport {
    pub teacher_fingerprint: String,
    pub pairs: usize,
    pub gated: usize,
}

pub fn teacher(cfg: &LoadedConfig) -> Result<TeacherProvider> {
    Ok(match &cfg.config.teacher {
        TeacherConfig::Lexicon {
            positive,
            negative,
            temperature,
        } => TeacherProvider::Lexicon(LexiconScorer::from_files(
            &cfg.resolve(positive),
            &cfg.resolve(negative),
            *temperature,
        )?),
        TeacherConfig::Precomputed { path } => TeacherProvider::from_precomputed_file(&cfg.resolve(path))?,
    })
}

fn read_pairs(out: &Path) -> Result<Vec<TextImagePair>> {
    read_jsonl(&out.join(PAIRS))
}

pub fn label(cfg: &LoadedConfig, out: &Path) -> Result<LabelReport> {
    let provider = teacher(cfg)?;
    let pairs = read_pairs(out)?;
    let dists = score_pairs(&pairs, &provider)?;
    let gating = &cfg.config.train.gating;
    let lines: Vec<LabelLine> = pairs
        .iter()
        .zip(&dists)
        .map(|(p, d)| {
            let g = gate(d, gating);
            LabelLine {
                record_id: p.record_id.clone(),
                image_id: p.image.image_id.clone(),
                p: *d,
                argmax: g.argmax_class,
                multiplier: g.multiplier,
            }
        })
        .collect();
    write_jsonl(&out.join(LABELS), &lines)?;
    let report = LabelReport {
        teacher_fingerprint: provider.fingerprint(),
        pairs: lines.len(),
        gated: lines.iter().map(|l| l.multiplier as usize).sum(),
    };
    write_json(&out.join(LABEL_REPORT), &report)?;
    Ok(report)
}

/// Trains from the cached pairs and labels in `cache`, writing the
/// checkpoint and report to `out`.
pub fn train(cfg: &LoadedConfig, cache: &Path, out: &Path, config: &TrainConfig) -> Result<TrainReport> {
    let pairs = read_pairs(cache)?;
    let labels: Vec<LabelLine> = read_jsonl(&cache.join(LABELS))?;
    let label_report: LabelReport = read_json(&cache.join(LABEL_REPORT))?;
    if labels.len() != pairs.len() {
        bail!("{} labels for {} pairs", labels.len(), pairs.len());
    }
    if let Some((p, l)) = pairs.iter().zip(&labels).find(|(p, l)| p.image.image_id != l.image_id) {
        bail!("label for `{}` found where `{}` was expected", l.image_id, p.image.image_id);
    }
    let dists: Vec<SentimentDistribution> = labels.iter().map(|l| l.p).collect();
    let (model, report) = train_scored(&pairs, &dists, &label_report.teacher_fingerprint, cfg.config.dim, config)?;
    fs::create_dir_all(out)?;
    Checkpoint::from_model(&model, config).save(&out.join(CHECKPOINT))?;
    write_json(&out.join(TRAIN_REPORT), &report)?;
    Ok(report)
}

pub fn eval_file_name(benchmark: &str) -> String {
    let safe: String = benchmark
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("eval_{safe}.json")
}

/// Evaluates the checkpoint in `out` on every configured benchmark. With
/// `zero_shot_only`, fine-tune entries are evaluated zero-shot too.
pub fn eval(cfg: &LoadedConfig, out: &Path, zero_shot_only: bool) -> Result<Vec<EvalResult>> {
    let model = Checkpoint::load(&out.join(CHECKPOINT))?.to_model()?;
    let mut results = Vec::new();
    for entry in &cfg.config.eval {
        let spec = EvalSpec::from_file(&cfg.resolve(&entry.spec))?;
        let data = load_benchmark(&cfg.resolve(&entry.data), &spec, cfg.config.dim)?;
        let mode = if entry.fine_tune && !zero_shot_only {
            EvalMode::FineTune(&cfg.config.train)
        } else {
            EvalMode::ZeroShot
        };
        let result = evaluate(&model, &spec, &data, mode).with_context(|| format!("benchmark `{}`", spec.name))?;
        let name = if entry.fine_tune && !zero_shot_only {
            format!("{}_finetune", spec.name)
        } else {
            spec.name.clone()
        };
        write_json(&out.join(eval_file_name(&name)), &result)?;
        results.push(result);
    }
    Ok(results)
}

