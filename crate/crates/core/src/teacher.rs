//! Frozen text-side teacher and the confidence gate applied to its outputs.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{normalize_word, words};
use crate::sentiment::{Polarity, SentimentDistribution, NUM_CLASSES};

/// Weight of the neutral logit per non-lexicon word.
pub const NEUTRAL_DAMPING: f64 = 0.25;

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("no precomputed teacher output for `{0}`")]
    MissingKey(String),
    #[error("lexicon words appear in both polarities: {0:?}")]
    OverlappingLexicons(Vec<String>),
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("gating threshold {0} is outside [0, 1]")]
    Threshold(f64),
}

/// Word-list sentiment scorer.
///
/// With `P` positive hits, `G` negative hits and `W` words, the logits are
/// `(P, κ·max(0, W − P − G), G) / temperature` with κ = [`NEUTRAL_DAMPING`],
/// and the output is their softmax.
#[derive(Debug, Clone)]
pub struct LexiconScorer {
    positive: HashSet<String>,
    negative: HashSet<String>,
    temperature: f64,
}

impl LexiconScorer {
    pub fn new<P, N, S>(positive: P, negative: N, temperature: f64) -> Result<Self, TeacherError>
    where
        P: IntoIterator<Item = S>,
        N: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(TeacherError::Temperature(temperature));
        }
        let norm = |it: &mut dyn Iterator<Item = S>| -> HashSet<String> {
            it.map(|w| normalize_word(w.as_ref()))
                .filter(|w| !w.is_empty())
                .collect()
        };
        let positive = norm(&mut positive.into_iter());
        let negative = norm(&mut negative.into_iter());
        let mut overlap: Vec<String> = positive.intersection(&negative).cloned().collect();
        if !overlap.is_empty() {
            overlap.sort();
            return Err(TeacherError::OverlappingLexicons(overlap));
        }
        Ok(LexiconScorer {
            positive,
            negative,
            temperature,
        })
    }

    /// Loads one-word-per-line lexicon files. Blank lines and lines starting
    /// with `#` are ignored.
    pub fn from_files(
        positive: &Path,
        negative: &Path,
        temperature: f64,
    ) -> Result<Self, TeacherError> {
        LexiconScorer::new(
            read_word_list(positive)?,
            read_word_list(negative)?,
            temperature,
        )
    }

    pub fn score(&self, text: &str) -> SentimentDistribution {
        let (mut total, mut pos, mut neg) = (0usize, 0usize, 0usize);
        for w in words(text) {
            total += 1;
            let w = normalize_word(w);
            if self.positive.contains(&w) {
                pos += 1;
            } else if self.negative.contains(&w) {
                neg += 1;
            }
        }
        let rest = total.saturating_sub(pos + neg) as f64;
        let t = self.temperature;
        SentimentDistribution::softmax([
            pos as f64 / t,
            NEUTRAL_DAMPING * rest / t,
            neg as f64 / t,
        ])
    }

    fn fingerprint_into(&self, h: &mut Sha256) {
        h.update(b"lexicon\0");
        for set in [&self.positive, &self.negative] {
            for w in set.iter().collect::<BTreeSet<_>>() {
                h.update(w.as_bytes());
                h.update(b"\0");
            }
            h.update(b"\x01");
        }
        h.update(self.temperature.to_le_bytes());
    }
}

fn read_word_list(path: &Path) -> Result<Vec<String>, TeacherError> {
    let raw = fs::read_to_string(path).map_err(|source| TeacherError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(raw
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[derive(Deserialize)]
struct PrecomputedLine {
    id: String,
    p: SentimentDistribution,
}

/// Source of teacher distributions. Immutable once built.
#[derive(Debug, Clone)]
pub enum TeacherProvider {
    Lexicon(LexiconScorer),
    /// Keyed by record id (or by text).
    Precomputed(HashMap<String, SentimentDistribution>),
}

impl TeacherProvider {
    /// Reads a JSON-Lines file of `{"id": str, "p": [pos, neu, neg]}`.
    pub fn from_precomputed_file(path: &Path) -> Result<Self, TeacherError> {
        let file = fs::File::open(path).map_err(|source| TeacherError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut map = HashMap::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| TeacherError::Io {
                path: path.display().to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: PrecomputedLine =
                serde_json::from_str(&line).map_err(|e| TeacherError::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            map.insert(parsed.id, parsed.p);
        }
        Ok(TeacherProvider::Precomputed(map))
    }

    /// Scores `key`: the text for a lexicon, the lookup key for a
    /// precomputed table.
    pub fn score(&self, key: &str) -> Result<SentimentDistribution, TeacherError> {
        match self {
            TeacherProvider::Lexicon(lex) => Ok(lex.score(key)),
            TeacherProvider::Precomputed(map) => map
                .get(key)
                .copied()
                .ok_or_else(|| TeacherError::MissingKey(key.to_string())),
        }
    }

    /// Scores a record's text. Precomputed tables are looked up by record id
    /// first, then by the text itself.
    pub fn score_record(
        &self,
        record_id: &str,
        text: &str,
    ) -> Result<SentimentDistribution, TeacherError> {
        match self {
            TeacherProvider::Lexicon(lex) => Ok(lex.score(text)),
            TeacherProvider::Precomputed(map) => map
                .get(record_id)
                .or_else(|| map.get(text))
                .copied()
                .ok_or_else(|| TeacherError::MissingKey(record_id.to_string())),
        }
    }

    /// Content hash of the provider state.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        match self {
            TeacherProvider::Lexicon(lex) => lex.fingerprint_into(&mut h),
            TeacherProvider::Precomputed(map) => {
                h.update(b"precomputed\0");
                let mut keys: Vec<_> = map.keys().collect();
                keys.sort();
                for k in keys {
                    h.update(k.as_bytes());
                    h.update(b"\0");
                    for p in map[k].probs() {
                        h.update(p.to_le_bytes());
                    }
                }
            }
        }
        hex::encode(h.finalize())
    }
}

/// Per-class minimum teacher confidence, ordered (positive, neutral, negative).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatingConfig {
    pub c: [f64; NUM_CLASSES],
}

impl Default for GatingConfig {
    fn default() -> Self {
        GatingConfig { c: [0.90, 0.90, 0.70] }
    }
}

impl GatingConfig {
    pub fn new(c: [f64; NUM_CLASSES]) -> Result<Self, TeacherError> {
        let g = GatingConfig { c };
        g.validate()?;
        Ok(g)
    }

    /// Clamps each threshold into [0, 1].
    pub fn clamped(c: [f64; NUM_CLASSES]) -> Self {
        GatingConfig {
            c: c.map(|x| if x.is_nan() { 1.0 } else { x.clamp(0.0, 1.0) }),
        }
    }

    pub fn uniform(threshold: f64) -> Self {
        GatingConfig {
            c: [threshold; NUM_CLASSES],
        }
    }

    pub fn disabled() -> Self {
        Self::uniform(0.0)
    }

    pub fn validate(&self) -> Result<(), TeacherError> {
        match self.c.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            Some(&bad) => Err(TeacherError::Threshold(bad)),
            None => Ok(()),
        }
    }

    pub fn threshold(&self, class: Polarity) -> f64 {
        self.c[class.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    /// 1 when the sample contributes to the loss, 0 otherwise.
    pub multiplier: u8,
    pub argmax_class: Polarity,
}

impl GateDecision {
    pub fn passed(&self) -> bool {
        self.multiplier == 1
    }
}

/// Keeps a sample iff the teacher's top probability reaches the threshold of
/// its own class.
pub fn gate(dist: &SentimentDistribution, config: &GatingConfig) -> GateDecision {
    let class = dist.argmax();
    GateDecision {
        multiplier: u8::from(dist.get(class) >= config.threshold(class)),
        argmax_class: class,
    }
}
