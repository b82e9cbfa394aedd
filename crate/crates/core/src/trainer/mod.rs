//! Student training by confidence-gated distillation from the teacher.
//!
//! The per-sample objective is `λ(g) · H(g, f) = −λ(g) Σ_k g_k log f_k`,
//! where `g` is the frozen teacher distribution for the text, `f` the student
//! output for the image embedding and `λ` the 0/1 confidence gate.

mod adam;
mod checkpoint;
mod model;

pub use adam::{adam_step, adam_update, AdamHyper, AdamState};
pub use checkpoint::{Checkpoint, TensorData};
pub use model::{
    backward, sample_loss, Architecture, Params, StudentModel, TrainingSample, LOG_CLAMP,
};

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TextImagePair;
use crate::sentiment::{Polarity, SentimentDistribution, NUM_CLASSES};
use crate::teacher::{GatingConfig, TeacherError, TeacherProvider};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("input dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error(
        "no sample passed the confidence gate (thresholds {thresholds:?}); lower the gating thresholds"
    )]
    ZeroGatedSamples { thresholds: [f64; NUM_CLASSES] },
    #[error("parameters became non-finite at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub adam_eps: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub gating: GatingConfig,
    pub feature_noise_sigma: f64,
    pub architecture: Architecture,
    pub hidden: usize,
    /// Train on the one-hot argmax of the teacher instead of its full output.
    pub hard_labels: bool,
    /// Share of gated samples held out for early stopping.
    pub holdout_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            adam_eps: 1e-7,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            batch_size: 64,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            gating: GatingConfig::default(),
            feature_noise_sigma: 0.0,
            architecture: Architecture::Linear,
            hidden: 64,
            hard_labels: false,
            holdout_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.patience == 0 {
            return bad("batch_size and patience must be positive");
        }
        if self.architecture == Architecture::Mlp1 && self.hidden == 0 {
            return bad("hidden width must be positive for mlp1");
        }
        if !(self.feature_noise_sigma >= 0.0) {
            return bad("feature_noise_sigma must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)");
        }
        self.gating.validate()?;
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

const STREAM_SPLIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_NOISE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heldout_loss: Option<f64>,
}

/// How [`fit`] picks the returned parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// Lowest validation loss (training loss without a validation set),
    /// stopping after `patience` epochs without improvement.
    BestLoss,
    /// Parameters after the last epoch.
    FinalEpoch,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions<'a> {
    pub validation: Option<&'a [TrainingSample]>,
    pub frozen_class: Option<Polarity>,
    pub selection: Selection,
}

impl Default for FitOptions<'_> {
    fn default() -> Self {
        FitOptions {
            validation: None,
            frozen_class: None,
            selection: Selection::BestLoss,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: StudentModel,
    pub epochs: Vec<EpochMetrics>,
    /// 1-based epoch of the returned parameters; 0 means untouched.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Mean loss over the gated-in samples; `None` if there are none.
pub fn mean_loss(model: &StudentModel, samples: &[TrainingSample]) -> Result<Option<f64>, TrainError> {
    let (mut total, mut count) = (0.0, 0usize);
    for s in samples.iter().filter(|s| s.is_gated_in()) {
        total += sample_loss(model, s)?;
        count += 1;
    }
    Ok((count > 0).then(|| total / count as f64))
}

/// Fraction of gated-in samples whose student argmax equals the target argmax.
pub fn agreement(model: &StudentModel, samples: &[TrainingSample]) -> Result<Option<f64>, TrainError> {
    let (mut hits, mut count) = (0usize, 0usize);
    for s in samples.iter().filter(|s| s.is_gated_in()) {
        if model.forward(&s.embedding)?.argmax() == s.argmax_class {
            hits += 1;
        }
        count += 1;
    }
    Ok((count > 0).then(|| hits as f64 / count as f64))
}

/// Mini-batch Adam over `train`, shuffled each epoch with the config seed.
pub fn fit(
    mut model: StudentModel,
    train: &[TrainingSample],
    config: &TrainConfig,
    options: FitOptions<'_>,
) -> Result<FitOutcome, TrainError> {
    config.validate()?;
    for s in train {
        if s.embedding.len() != model.n {
            return Err(TrainError::DimensionMismatch {
                expected: model.n,
                found: s.embedding.len(),
            });
        }
    }
    let hp = AdamHyper::from(config);
    let mut state = AdamState::new(&model);
    let mut shuffle_rng = config.rng(STREAM_SHUFFLE);
    let mut noise_rng = config.rng(STREAM_NOISE);
    let noise = (config.feature_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, config.feature_noise_sigma).expect("sigma validated"));

    let mut epochs = Vec::new();
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut since_best = 0usize;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut hidden = Vec::new();
    let mut x = Vec::with_capacity(model.n);

    for epoch in 1..=config.max_epochs {
        order.clear();
        order.extend(0..train.len());
        order.shuffle(&mut shuffle_rng);
        let (mut epoch_loss, mut epoch_count) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            let mut grads = Params::zeros_like(&model.params);
            let (mut batch_loss, mut count) = (0.0, 0usize);
            for &i in batch {
                let s = &train[i];
                if !s.is_gated_in() {
                    continue;
                }
                x.clear();
                match &noise {
                    Some(d) => x.extend(s.embedding.iter().map(|&v| v as f64 + d.sample(&mut noise_rng))),
                    None => x.extend(s.embedding.iter().map(|&v| v as f64)),
                }
                batch_loss += model.accumulate(&x, &s.teacher_dist, &mut grads, &mut hidden);
                count += 1;
            }
            if count == 0 {
                continue;
            }
            let inv = 1.0 / count as f64;
            for t in grads.tensors_mut() {
                t.iter_mut().for_each(|g| *g *= inv);
            }
            if let Some(class) = options.frozen_class {
                grads.freeze_class(class);
            }
            adam_step(&mut model, &grads, &mut state, hp);
            if !model.params.is_finite() {
                return Err(TrainError::NonFinite { epoch });
            }
            epoch_loss += batch_loss;
            epoch_count += count;
        }
        let train_loss = if epoch_count > 0 {
            epoch_loss / epoch_count as f64
        } else {
            0.0
        };
        let heldout_loss = match options.validation {
            Some(v) => mean_loss(&model, v)?,
            None => None,
        };
        epochs.push(EpochMetrics {
            epoch,
            train_loss,
            heldout_loss,
        });
        if options.selection == Selection::BestLoss {
            let monitored = heldout_loss.unwrap_or(train_loss);
            if monitored < best.0 {
                best = (monitored, model.clone(), epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let (model, best_epoch) = match options.selection {
        Selection::BestLoss if !epochs.is_empty() => (best.1, best.2),
        _ => (model, epochs.len()),
    };
    Ok(FitOutcome {
        model,
        epochs,
        best_epoch,
        stopped_early,
    })
}

/// Per-class bookkeeping over the training corpus, by teacher argmax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassBreakdown {
    pub class: Polarity,
    pub tweets: usize,
    pub images: usize,
    pub gated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub architecture: Architecture,
    pub hard_labels: bool,
    pub teacher_fingerprint: String,
    pub samples: usize,
    pub gated: usize,
    pub ungated: usize,
    pub classes: Vec<ClassBreakdown>,
    pub train_size: usize,
    pub heldout_size: usize,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub heldout_agreement: Option<f64>,
}

/// Teacher output for every pair. Each record's text is scored once.
pub fn score_pairs(
    pairs: &[TextImagePair],
    provider: &TeacherProvider,
) -> Result<Vec<SentimentDistribution>, TeacherError> {
    let mut first: HashMap<&str, usize> = HashMap::new();
    let mut unique = Vec::new();
    for p in pairs {
        first.entry(p.record_id.as_str()).or_insert_with(|| {
            unique.push(p);
            unique.len() - 1
        });
    }
    let scored = unique
        .par_iter()
        .map(|p| provider.score_record(&p.record_id, &p.text))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(pairs
        .iter()
        .map(|p| scored[first[p.record_id.as_str()]])
        .collect())
}

/// Trains on pre-gated samples. Gated-out samples are ignored entirely, so
/// including them or not yields bitwise-identical results.
pub fn train_samples(
    samples: &[TrainingSample],
    dim: usize,
    config: &TrainConfig,
) -> Result<(FitOutcome, Vec<TrainingSample>, Vec<TrainingSample>), TrainError> {
    config.validate()?;
    let mut gated: Vec<TrainingSample> = samples
        .iter()
        .filter(|s| s.is_gated_in())
        .cloned()
        .collect();
    if gated.is_empty() {
        return Err(TrainError::ZeroGatedSamples {
            thresholds: config.gating.c,
        });
    }
    if config.hard_labels {
        for s in &mut gated {
            s.teacher_dist = SentimentDistribution::one_hot(s.argmax_class);
        }
    }
    let mut split_rng = config.rng(STREAM_SPLIT);
    gated.shuffle(&mut split_rng);
    let n_hold = (config.holdout_fraction * gated.len() as f64).floor() as usize;
    let train_set = gated.split_off(n_hold);
    let heldout = gated;

    let model = StudentModel::init(config.architecture, dim, config.hidden, config.seed);
    let options = FitOptions {
        validation: (!heldout.is_empty()).then_some(heldout.as_slice()),
        ..FitOptions::default()
    };
    let outcome = fit(model, &train_set, config, options)?;
    Ok((outcome, train_set, heldout))
}

/// Scores, gates and trains. Returns the best-held-out-loss student.
pub fn train(
    pairs: &[TextImagePair],
    provider: &TeacherProvider,
    dim: usize,
    config: &TrainConfig,
) -> Result<(StudentModel, TrainReport), TrainError> {
    config.validate()?;
    let dists = score_pairs(pairs, provider)?;
    train_scored(pairs, &dists, &provider.fingerprint(), dim, config)
}

/// Gates and trains on teacher outputs computed earlier, one per pair.
pub fn train_scored(
    pairs: &[TextImagePair],
    dists: &[SentimentDistribution],
    teacher_fingerprint: &str,
    dim: usize,
    config: &TrainConfig,
) -> Result<(StudentModel, TrainReport), TrainError> {
    config.validate()?;
    if dists.len() != pairs.len() {
        return Err(TrainError::Config(format!(
            "{} teacher outputs for {} pairs",
            dists.len(),
            pairs.len()
        )));
    }
    let samples: Vec<TrainingSample> = pairs
        .iter()
        .zip(dists)
        .map(|(p, d)| TrainingSample::new(p.image.embedding.clone(), *d, &config.gating))
        .collect();

    let mut tweets: [HashSet<&str>; NUM_CLASSES] = Default::default();
    let mut images = [0usize; NUM_CLASSES];
    let mut gated = [0usize; NUM_CLASSES];
    for (p, s) in pairs.iter().zip(&samples) {
        let k = s.argmax_class.index();
        tweets[k].insert(p.record_id.as_str());
        images[k] += 1;
        gated[k] += s.multiplier as usize;
    }
    let classes = Polarity::ALL
        .iter()
        .map(|&class| {
            let k = class.index();
            ClassBreakdown {
                class,
                tweets: tweets[k].len(),
                images: images[k],
                gated: gated[k],
            }
        })
        .collect();

    let (outcome, train_set, heldout) = train_samples(&samples, dim, config)?;
    let total_gated: usize = gated.iter().sum();
    let report = TrainReport {
        architecture: config.architecture,
        hard_labels: config.hard_labels,
        teacher_fingerprint: teacher_fingerprint.to_string(),
        samples: samples.len(),
        gated: total_gated,
        ungated: samples.len() - total_gated,
        classes,
        train_size: train_set.len(),
        heldout_size: heldout.len(),
        epochs: outcome.epochs,
        best_epoch: outcome.best_epoch,
        stopped_early: outcome.stopped_early,
        heldout_agreement: agreement(&outcome.model, &heldout)?,
    };
    Ok((outcome.model, report))
}
