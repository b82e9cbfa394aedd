//! Seeded generator for test corpora and benchmarks whose text polarity and
//! embedding direction share a latent class.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{write_records, CorpusError, ImageItem, MultimodalRecord, Rejection};
use crate::eval::{remap_label, EvalError, EvalSpec, LabeledSample};
use crate::sentiment::{BinaryPolarity, Polarity, NUM_CLASSES};

pub const POSITIVE_WORDS: &[&str] = &[
    "good", "great", "happy", "love", "lovely", "beautiful", "wonderful", "amazing", "excellent", "awesome",
    "fantastic", "joy", "delightful", "brilliant", "sunny", "fun",
];
pub const NEGATIVE_WORDS: &[&str] = &[
    "bad", "sad", "terrible", "awful", "hate", "horrible", "angry", "ugly", "broken", "worst", "miserable",
    "disgusting", "scary", "gloomy", "painful", "lonely",
];
const CONTENT_WORDS: &[&str] = &[
    "photo", "today", "city", "street", "morning", "train", "coffee", "window", "people", "weather", "dog",
    "bridge", "market", "river", "lunch", "office", "garden", "bus", "evening", "picture", "friends",
    "weekend", "road", "shop", "park", "view", "building", "car", "table", "night",
];
const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "is", "at", "on", "and", "of", "to", "in", "this", "with", "my", "was", "for", "from",
];
const FOREIGN_WORDS: &[&str] = &[
    "hola", "gato", "perro", "casa", "bonito", "mundo", "ciudad", "calle", "tarde", "amigos", "foto", "playa",
];

/// Relative size of the perturbation applied to near (non-exact) copies.
const NEAR_COPY_DELTA: f64 = 0.05;

const STREAM_DIRECTIONS: u64 = 1;
const STREAM_RECORDS: u64 = 2;
const STREAM_PLANTING: u64 = 3;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_records: usize,
    /// Fraction of admissible images planted as copies of earlier ones.
    pub dup_rate: f64,
    /// Per-component Gaussian noise around the class direction.
    pub noise_sigma: f64,
    /// Latent class priors in (positive, neutral, negative) order.
    pub class_priors: [f64; NUM_CLASSES],
    pub seed: u64,
    /// Probability that an admissible record carries a second image.
    pub multi_image_rate: f64,
    /// Fraction of records built to fail the default admission filter.
    pub filter_reject_rate: f64,
    pub dim: usize,
    /// Share of planted duplicates that are bit-exact copies.
    pub exact_share: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_records: 1000,
            dup_rate: 0.2,
            noise_sigma: 0.05,
            class_priors: [1.0 / 3.0; NUM_CLASSES],
            seed: 0,
            multi_image_rate: 0.0,
            filter_reject_rate: 0.0,
            dim: 64,
            exact_share: 0.5,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |m: &str| Err(SyntheticError::Spec(m.to_string()));
        if self.n_records == 0 {
            return bad("n_records must be positive");
        }
        if !(0.0..1.0).contains(&self.dup_rate) {
            return bad("dup_rate must lie in [0, 1)");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and nonnegative");
        }
        if self.class_priors.iter().any(|p| !(*p >= 0.0)) || (self.class_priors.iter().sum::<f64>() - 1.0).abs() > 1e-6
        {
            return bad("class_priors must lie on the simplex");
        }
        for (name, r) in [
            ("multi_image_rate", self.multi_image_rate),
            ("filter_reject_rate", self.filter_reject_rate),
            ("exact_share", self.exact_share),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(SyntheticError::Spec(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.filter_reject_rate >= 1.0 {
            return bad("filter_reject_rate must leave at least one admissible record");
        }
        if self.dim < NUM_CLASSES {
            return bad("dim must be at least 3");
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedImage {
    pub image_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<String>,
    #[serde(default)]
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordTruth {
    pub id: String,
    pub class: Polarity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejection: Option<Rejection>,
    pub images: Vec<PlantedImage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SyntheticSpec,
    /// Images on admissible records.
    pub images: usize,
    pub planted_duplicates: usize,
    pub planted_exact: usize,
    pub planted_near: usize,
    pub records: Vec<RecordTruth>,
}

impl GroundTruth {
    pub fn load(path: &Path) -> Result<Self, SyntheticError> {
        let raw = fs::read_to_string(path).map_err(|source| SyntheticError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&raw).map_err(|e| SyntheticError::Spec(format!("{}: {e}", path.display())))
    }

    pub fn class_of(&self, record_id: &str) -> Option<Polarity> {
        self.records.iter().find(|r| r.id == record_id).map(|r| r.class)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub records: Vec<MultimodalRecord>,
    pub truth: GroundTruth,
}

/// Orthonormal class directions derived from `seed`. Corpora and benchmarks
/// generated with the same seed share them.
pub fn class_directions(dim: usize, seed: u64) -> [Vec<f64>; NUM_CLASSES] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_DIRECTIONS);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(NUM_CLASSES);
    while dirs.len() < NUM_CLASSES {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        for d in &dirs {
            let p: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(d).for_each(|(a, b)| *a -= p * b);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            dirs.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    dirs.try_into().expect("three directions")
}

fn noisy(dir: &[f64], sigma: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    dir.iter()
        .map(|&d| {
            let z: f64 = StandardNormal.sample(rng);
            (d + sigma * z) as f32
        })
        .collect()
}

fn near_copy(src: &[f32], rng: &mut ChaCha8Rng) -> Vec<f32> {
    let norm = src.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    let scale = NEAR_COPY_DELTA * norm / (src.len() as f64).sqrt();
    src.iter()
        .map(|&x| {
            let z: f64 = StandardNormal.sample(rng);
            (x as f64 + scale * z) as f32
        })
        .collect()
}

fn pick<'a>(words: &[&'a str], rng: &mut ChaCha8Rng) -> &'a str {
    words.choose(rng).expect("non-empty word list")
}

/// English filler: content words plus at least two function words.
fn filler(count: usize, rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    (0..count)
        .map(|i| {
            if i < 2 || rng.random_bool(0.3) {
                pick(FUNCTION_WORDS, rng)
            } else {
                pick(CONTENT_WORDS, rng)
            }
        })
        .collect()
}

fn sentiment_text(class: Polarity, rng: &mut ChaCha8Rng) -> String {
    let mut words = match class {
        Polarity::Neutral => filler(rng.random_range(6..=16), rng),
        _ => {
            let (own, other) = match class {
                Polarity::Positive => (POSITIVE_WORDS, NEGATIVE_WORDS),
                _ => (NEGATIVE_WORDS, POSITIVE_WORDS),
            };
            let hits = rng.random_range(2..=5);
            // keep the damped neutral logit below the hit count
            let mut w = filler(rng.random_range(3..=(4 * hits - 1).min(10)), rng);
            w.extend((0..hits).map(|_| pick(own, rng)));
            if hits >= 3 && rng.random_bool(0.2) {
                w.push(pick(other, rng));
            }
            w
        }
    };
    words.shuffle(rng);
    words.join(" ")
}

fn sample_class(priors: &[f64; NUM_CLASSES], rng: &mut ChaCha8Rng) -> Polarity {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in priors.iter().enumerate() {
        acc += p;
        if u < acc && *p > 0.0 {
            return Polarity::from_index(i).expect("class index");
        }
    }
    let last = priors.iter().rposition(|p| *p > 0.0).unwrap_or(0);
    Polarity::from_index(last).expect("class index")
}

/// Builds a corpus in memory. Records come out in `created_at` order; every
/// planted duplicate copies an earlier original image of the same class.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus, SyntheticError> {
    spec.validate()?;
    let dirs = class_directions(spec.dim, spec.seed);
    let mut rng = spec.rng(STREAM_RECORDS);
    let mut plant_rng = spec.rng(STREAM_PLANTING);

    let n_reject = (spec.filter_reject_rate * spec.n_records as f64).round() as usize;
    let n_reject = n_reject.min(spec.n_records - 1);
    let mut rejected = vec![false; spec.n_records];
    for i in rand::seq::index::sample(&mut plant_rng, spec.n_records, n_reject) {
        rejected[i] = true;
    }

    // Image slots on admissible records, then which of them are copies.
    let slots: Vec<usize> = rejected
        .iter()
        .map(|&r| if r { 0 } else { 1 + usize::from(rng.random_bool(spec.multi_image_rate)) })
        .collect();
    let n_images: usize = slots.iter().sum();
    let n_dups = ((spec.dup_rate * n_images as f64).round() as usize).min(n_images.saturating_sub(1));
    let mut is_dup = vec![false; n_images];
    if n_dups > 0 {
        for i in rand::seq::index::sample(&mut plant_rng, n_images - 1, n_dups) {
            is_dup[i + 1] = true;
        }
    }

    // (image_id, class, embedding) of every admissible original so far.
    let mut originals: Vec<(String, Polarity, Vec<f32>)> = Vec::new();
    let mut records = Vec::with_capacity(spec.n_records);
    let mut truth = Vec::with_capacity(spec.n_records);
    let (mut slot, mut planted_exact) = (0usize, 0usize);
    let rejections = [Rejection::TooFewWords, Rejection::NotEnglish, Rejection::NoImage, Rejection::Retweet];

    for (r, &n_slots) in slots.iter().enumerate() {
        let id = format!("syn-{r:06}");
        let created_at = 1_600_000_000 + 60 * r as i64;
        if rejected[r] {
            let class = sample_class(&spec.class_priors, &mut rng);
            let reason = *rejections.choose(&mut rng).expect("reasons");
            let text = match reason {
                Rejection::TooFewWords => filler(3, &mut rng).join(" "),
                Rejection::NotEnglish => (0..8).map(|_| pick(FOREIGN_WORDS, &mut rng)).collect::<Vec<_>>().join(" "),
                _ => sentiment_text(class, &mut rng),
            };
            let images = if reason == Rejection::NoImage {
                Vec::new()
            } else {
                vec![ImageItem::new(format!("{id}-img0"), noisy(&dirs[class.index()], spec.noise_sigma, &mut rng))]
            };
            truth.push(RecordTruth {
                id: id.clone(),
                class,
                rejection: Some(reason),
                images: images
                    .iter()
                    .map(|im| PlantedImage {
                        image_id: im.image_id.clone(),
                        duplicate_of: None,
                        exact: false,
                    })
                    .collect(),
            });
            records.push(MultimodalRecord {
                id,
                text,
                is_retweet: reason == Rejection::Retweet,
                created_at,
                images,
            });
            continue;
        }

        let mut class = None;
        let mut images = Vec::with_capacity(n_slots);
        let mut planted = Vec::with_capacity(n_slots);
        for k in 0..n_slots {
            let image_id = format!("{id}-img{k}");
            if is_dup[slot] {
                let candidates: Vec<usize> = match class {
                    None => (0..originals.len()).collect(),
                    Some(c) => (0..originals.len()).filter(|&i| originals[i].1 == c).collect(),
                };
                let src = if candidates.is_empty() {
                    plant_rng.random_range(0..originals.len())
                } else {
                    *candidates.choose(&mut plant_rng).expect("non-empty")
                };
                let (src_id, src_class, src_emb) = &originals[src];
                class.get_or_insert(*src_class);
                let exact = plant_rng.random_bool(spec.exact_share);
                let emb = if exact { src_emb.clone() } else { near_copy(src_emb, &mut plant_rng) };
                planted_exact += usize::from(exact);
                planted.push(PlantedImage {
                    image_id: image_id.clone(),
                    duplicate_of: Some(src_id.clone()),
                    exact,
                });
                images.push(ImageItem::new(image_id, emb));
            } else {
                let c = *class.get_or_insert_with(|| sample_class(&spec.class_priors, &mut rng));
                let emb = noisy(&dirs[c.index()], spec.noise_sigma, &mut rng);
                originals.push((image_id.clone(), c, emb.clone()));
                planted.push(PlantedImage {
                    image_id: image_id.clone(),
                    duplicate_of: None,
                    exact: false,
                });
                images.push(ImageItem::new(image_id, emb));
            }
            slot += 1;
        }
        let class = class.expect("admissible records have an image");
        records.push(MultimodalRecord {
            id: id.clone(),
            text: sentiment_text(class, &mut rng),
            is_retweet: false,
            created_at,
            images,
        });
        truth.push(RecordTruth {
            id,
            class,
            rejection: None,
            images: planted,
        });
    }

    Ok(SyntheticCorpus {
        records,
        truth: GroundTruth {
            spec: spec.clone(),
            images: n_images,
            planted_duplicates: n_dups,
            planted_exact,
            planted_near: n_dups - planted_exact,
            records: truth,
        },
    })
}

/// Paths written by [`write_synthetic`].
pub struct SyntheticFiles;

impl SyntheticFiles {
    pub const CORPUS: &'static str = "corpus.jsonl";
    pub const TRUTH: &'static str = "ground_truth.json";
    pub const POSITIVE: &'static str = "pos_words.txt";
    pub const NEGATIVE: &'static str = "neg_words.txt";
}

/// Writes the corpus, ground truth and the two lexicon files into `dir`.
pub fn write_synthetic(dir: &Path, spec: &SyntheticSpec) -> Result<GroundTruth, SyntheticError> {
    let corpus = gen_synthetic(spec)?;
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| SyntheticError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    write_records(&dir.join(SyntheticFiles::CORPUS), &corpus.records)?;
    let truth_path = dir.join(SyntheticFiles::TRUTH);
    let json = serde_json::to_string_pretty(&corpus.truth).expect("ground truth serializes");
    fs::write(&truth_path, json).map_err(io(&truth_path))?;
    for (name, words) in [(SyntheticFiles::POSITIVE, POSITIVE_WORDS), (SyntheticFiles::NEGATIVE, NEGATIVE_WORDS)] {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(io(&path))?;
        for w in words {
            writeln!(f, "{w}").map_err(io(&path))?;
        }
    }
    Ok(corpus.truth)
}

/// Labeled benchmark items whose embeddings sit on the polarity directions of
/// corpora generated with `direction_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkGen {
    pub n: usize,
    pub dim: usize,
    pub noise_sigma: f64,
    pub direction_seed: u64,
    pub seed: u64,
}

pub fn gen_benchmark(spec: &EvalSpec, gen: &BenchmarkGen) -> Result<Vec<LabeledSample>, SyntheticError> {
    if gen.dim < NUM_CLASSES || !(gen.noise_sigma >= 0.0) {
        return Err(SyntheticError::Spec("benchmark needs dim >= 3 and nonnegative noise".into()));
    }
    let dirs = class_directions(gen.dim, gen.direction_seed);
    let labels = spec.label_space.labels();
    let mut rng = ChaCha8Rng::seed_from_u64(gen.seed);
    (0..gen.n)
        .map(|i| {
            // cycle through labels so small benchmarks stay balanced
            let label = labels[i % labels.len()];
            let class = match remap_label(label, spec)? {
                BinaryPolarity::Positive => Polarity::Positive,
                BinaryPolarity::Negative => Polarity::Negative,
            };
            Ok(LabeledSample {
                id: format!("{}-{i:05}", spec.name),
                label: label.to_string(),
                embedding: noisy(&dirs[class.index()], gen.noise_sigma, &mut rng),
            })
        })
        .collect()
}
