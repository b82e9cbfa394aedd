//! Benchmark evaluation: label remapping, neutral masking, split protocols
//! and mean ± std accuracy.

mod splits;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::sentiment::{BinaryPolarity, Polarity, SentimentDistribution};
use crate::trainer::{fit, FitOptions, Selection, StudentModel, TrainConfig, TrainError, TrainingSample};

pub use splits::{kfold_splits, random_splits_80_5_15, ThreeWaySplit};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("unknown label `{label}` for benchmark `{benchmark}`")]
    UnknownLabel { benchmark: String, label: String },
    #[error("invalid eval spec: {0}")]
    Spec(String),
    #[error("need at least {needed} samples, found {found}")]
    TooFewSamples { needed: usize, found: usize },
    #[error("length mismatch: {preds} predictions, {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("accuracy of an empty set")]
    Empty,
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSpace {
    BinaryPolarity,
    Emotions6,
    Emotions8,
}

impl LabelSpace {
    pub fn labels(self) -> &'static [&'static str] {
        match self {
            LabelSpace::BinaryPolarity => &["positive", "negative"],
            LabelSpace::Emotions6 => &["Anger", "Disgust", "Fear", "Joy", "Sadness", "Surprise"],
            LabelSpace::Emotions8 => &[
                "Amusement",
                "Anger",
                "Awe",
                "Contentment",
                "Disgust",
                "Excitement",
                "Fear",
                "Sadness",
            ],
        }
    }

    /// Canonical spelling of `label` in this space, case-insensitively.
    pub fn canonical(self, label: &str) -> Option<&'static str> {
        self.labels().iter().copied().find(|l| l.eq_ignore_ascii_case(label.trim()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitProtocol {
    #[serde(rename = "kfold5")]
    KFold5,
    #[serde(rename = "random_80_5_15")]
    Random80_5_15,
}

fn default_repeats() -> usize {
    5
}

/// A benchmark definition. `remap` may be left empty for binary benchmarks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSpec {
    pub name: String,
    pub label_space: LabelSpace,
    #[serde(default)]
    pub remap: BTreeMap<String, BinaryPolarity>,
    pub split_protocol: SplitProtocol,
    #[serde(default = "default_repeats")]
    pub n_repeats: usize,
    #[serde(default)]
    pub seed: u64,
}

impl EvalSpec {
    /// Eight emotions, four per polarity, random 80/5/15 splits.
    pub fn fi(seed: u64) -> Self {
        use BinaryPolarity::*;
        let remap = [
            ("Amusement", Positive),
            ("Awe", Positive),
            ("Contentment", Positive),
            ("Excitement", Positive),
            ("Anger", Negative),
            ("Disgust", Negative),
            ("Fear", Negative),
            ("Sadness", Negative),
        ];
        Self::with_table("FI", LabelSpace::Emotions8, &remap, SplitProtocol::Random80_5_15, seed)
    }

    /// Six emotions, Joy and Surprise positive, 5-fold CV.
    pub fn emotion_roi(seed: u64) -> Self {
        use BinaryPolarity::*;
        let remap = [
            ("Joy", Positive),
            ("Surprise", Positive),
            ("Anger", Negative),
            ("Disgust", Negative),
            ("Fear", Negative),
            ("Sadness", Negative),
        ];
        Self::with_table("EmotionROI", LabelSpace::Emotions6, &remap, SplitProtocol::KFold5, seed)
    }

    /// Binary polarity with 5-fold CV, as used for the Twitter benchmarks.
    pub fn binary(name: &str, seed: u64) -> Self {
        use BinaryPolarity::*;
        let remap = [("positive", Positive), ("negative", Negative)];
        Self::with_table(name, LabelSpace::BinaryPolarity, &remap, SplitProtocol::KFold5, seed)
    }

    fn with_table(
        name: &str,
        label_space: LabelSpace,
        table: &[(&str, BinaryPolarity)],
        split_protocol: SplitProtocol,
        seed: u64,
    ) -> Self {
        EvalSpec {
            name: name.to_string(),
            label_space,
            remap: table.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            split_protocol,
            n_repeats: 5,
            seed,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, EvalError> {
        let raw = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut spec: EvalSpec = serde_json::from_str(&raw).map_err(|e| EvalError::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        spec.normalize()?;
        Ok(spec)
    }

    /// Canonicalizes remap keys, fills the identity table for binary specs
    /// and checks totality.
    pub fn normalize(&mut self) -> Result<(), EvalError> {
        if self.n_repeats == 0 {
            return Err(EvalError::Spec("n_repeats must be positive".into()));
        }
        if self.label_space == LabelSpace::BinaryPolarity && self.remap.is_empty() {
            self.remap = Self::binary("", 0).remap;
        }
        let mut table = BTreeMap::new();
        for (k, v) in &self.remap {
            let canon = self.label_space.canonical(k).ok_or_else(|| EvalError::UnknownLabel {
                benchmark: self.name.clone(),
                label: k.clone(),
            })?;
            if table.insert(canon.to_string(), *v).is_some() {
                return Err(EvalError::Spec(format!("label `{canon}` mapped twice")));
            }
        }
        if let Some(missing) = self.label_space.labels().iter().find(|l| !table.contains_key(**l)) {
            return Err(EvalError::Spec(format!("remap has no entry for `{missing}`")));
        }
        if self.label_space == LabelSpace::BinaryPolarity
            && (table["positive"] != BinaryPolarity::Positive || table["negative"] != BinaryPolarity::Negative)
        {
            return Err(EvalError::Spec("binary benchmarks use the identity remap".into()));
        }
        self.remap = table;
        Ok(())
    }

    pub fn remap_label(&self, label: &str) -> Result<BinaryPolarity, EvalError> {
        remap_label(label, self)
    }
}

pub fn remap_label(label: &str, spec: &EvalSpec) -> Result<BinaryPolarity, EvalError> {
    spec.label_space
        .canonical(label)
        .and_then(|c| spec.remap.get(c).copied())
        .ok_or_else(|| EvalError::UnknownLabel {
            benchmark: spec.name.clone(),
            label: label.to_string(),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: String,
    pub label: String,
    pub embedding: Vec<f32>,
}

/// Reads a benchmark JSONL file, rejecting labels outside the spec and
/// embeddings of the wrong width.
pub fn load_benchmark(path: &Path, spec: &EvalSpec, dim: usize) -> Result<Vec<LabeledSample>, EvalError> {
    let p = path.display().to_string();
    let file = File::open(path).map_err(|source| EvalError::Io { path: p.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io { path: p.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| EvalError::Parse {
            path: p.clone(),
            line: i + 1,
            message,
        };
        let sample: LabeledSample = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if sample.embedding.len() != dim {
            return Err(parse_err(format!(
                "embedding has {} values, expected {dim}",
                sample.embedding.len()
            )));
        }
        if sample.embedding.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite embedding".into()));
        }
        remap_label(&sample.label, spec)?;
        out.push(sample);
    }
    Ok(out)
}

pub fn write_benchmark(path: &Path, samples: &[LabeledSample]) -> Result<(), EvalError> {
    let io = |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Binary decision from a three-way distribution, ignoring neutral.
pub fn masked_decision(dist: &SentimentDistribution) -> BinaryPolarity {
    if dist.get(Polarity::Negative) > dist.get(Polarity::Positive) {
        BinaryPolarity::Negative
    } else {
        BinaryPolarity::Positive
    }
}

pub fn masked_predict(model: &StudentModel, x: &[f32]) -> Result<BinaryPolarity, EvalError> {
    Ok(masked_decision(&model.forward(x)?))
}

pub fn accuracy(preds: &[BinaryPolarity], labels: &[BinaryPolarity]) -> Result<f64, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub split: usize,
    pub accuracy: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub benchmark: String,
    pub fine_tune: bool,
    pub mean: f64,
    /// Population standard deviation over splits.
    pub std: f64,
    pub per_split: Vec<SplitResult>,
}

impl EvalResult {
    /// Percentages to one decimal, e.g. `92.4±2.0`.
    pub fn summary(&self) -> String {
        format_mean_std(self.mean, self.std)
    }
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{:.1}±{:.1}", mean * 100.0, std * 100.0)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Zero-shot uses the model as is; fine-tuning continues training a copy
/// per split with this configuration.
#[derive(Debug, Clone)]
pub enum EvalMode<'a> {
    ZeroShot,
    FineTune(&'a TrainConfig),
}

struct SplitPlan {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn plan(spec: &EvalSpec, n: usize) -> Result<Vec<SplitPlan>, EvalError> {
    let ids: Vec<usize> = (0..n).collect();
    Ok(match spec.split_protocol {
        SplitProtocol::KFold5 => kfold_splits(&ids, 5, spec.seed)?
            .into_iter()
            .map(|(train, test)| SplitPlan {
                train,
                val: Vec::new(),
                test,
            })
            .collect(),
        SplitProtocol::Random80_5_15 => random_splits_80_5_15(&ids, spec.n_repeats, spec.seed)?
            .into_iter()
            .map(|s| SplitPlan {
                train: s.train,
                val: s.val,
                test: s.test,
            })
            .collect(),
    })
}

fn one_hot(label: BinaryPolarity) -> SentimentDistribution {
    SentimentDistribution::one_hot(label.as_polarity())
}

/// Runs the split protocol of `spec` over `data`. Splits run in parallel;
/// split `i` fine-tunes with seed `spec.seed + i`.
pub fn evaluate(
    model: &StudentModel,
    spec: &EvalSpec,
    data: &[LabeledSample],
    mode: EvalMode<'_>,
) -> Result<EvalResult, EvalError> {
    let labels = data
        .iter()
        .map(|s| remap_label(&s.label, spec))
        .collect::<Result<Vec<_>, _>>()?;
    for s in data {
        if s.embedding.len() != model.n {
            return Err(TrainError::DimensionMismatch {
                expected: model.n,
                found: s.embedding.len(),
            }
            .into());
        }
    }
    let plans = plan(spec, data.len())?;
    let supervised = |idx: &[usize]| -> Vec<TrainingSample> {
        idx.iter()
            .map(|&i| TrainingSample::supervised(data[i].embedding.clone(), one_hot(labels[i])))
            .collect()
    };

    let per_split = plans
        .par_iter()
        .enumerate()
        .map(|(i, p)| -> Result<SplitResult, EvalError> {
            let tuned;
            let m = match mode {
                EvalMode::ZeroShot => model,
                EvalMode::FineTune(base) => {
                    let config = TrainConfig {
                        seed: spec.seed.wrapping_add(i as u64),
                        ..base.clone()
                    };
                    let train = supervised(&p.train);
                    let val = supervised(&p.val);
                    let options = FitOptions {
                        validation: (!val.is_empty()).then_some(val.as_slice()),
                        frozen_class: Some(Polarity::Neutral),
                        selection: match spec.split_protocol {
                            SplitProtocol::KFold5 => Selection::FinalEpoch,
                            SplitProtocol::Random80_5_15 => Selection::BestLoss,
                        },
                    };
                    tuned = fit(model.clone(), &train, &config, options)?.model;
                    &tuned
                }
            };
            let preds = p
                .test
                .iter()
                .map(|&j| masked_predict(m, &data[j].embedding))
                .collect::<Result<Vec<_>, _>>()?;
            let truth: Vec<_> = p.test.iter().map(|&j| labels[j]).collect();
            Ok(SplitResult {
                split: i,
                accuracy: accuracy(&preds, &truth)?,
                n_test: p.test.len(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let accs: Vec<f64> = per_split.iter().map(|s| s.accuracy).collect();
    let (mean, std) = mean_std(&accs);
    Ok(EvalResult {
        benchmark: spec.name.clone(),
        fine_tune: matches!(mode, EvalMode::FineTune(_)),
        mean,
        std,
        per_split,
    })
}
