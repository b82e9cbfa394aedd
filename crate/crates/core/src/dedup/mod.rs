//! Near-duplicate image removal by cosine similarity of embeddings.
//!
//! Retention is greedy and first-wins: each offered image is compared only
//! against images retained before it. The relation is therefore not
//! transitive; if `a ~ b` drops `b`, a later `c ~ b` with `c ≁ a` survives.

mod lsh;

pub use lsh::LshIndex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ImageItem, TextImagePair};

/// Similarity threshold used when none is configured.
pub const DEFAULT_TAU: f64 = 0.98875;

// Above this many retained entries the exact scan is split across threads.
const PARALLEL_SCAN_MIN: usize = 8192;

#[derive(Debug, Error, PartialEq)]
pub enum DedupError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cosine similarity is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("invalid dedup config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    #[default]
    Exact,
    Lsh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    pub tau: f64,
    pub index_kind: IndexKind,
    pub lsh_planes: usize,
    pub lsh_tables: usize,
    pub lsh_seed: u64,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig {
            tau: DEFAULT_TAU,
            index_kind: IndexKind::Exact,
            lsh_planes: 16,
            lsh_tables: 8,
            lsh_seed: 0,
        }
    }
}

impl DedupConfig {
    pub fn lsh() -> Self {
        DedupConfig {
            index_kind: IndexKind::Lsh,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DedupError> {
        if !(self.tau > -1.0 && self.tau <= 1.0) {
            return Err(DedupError::Config(format!("tau = {} is outside (-1, 1]", self.tau)));
        }
        if !(1..=64).contains(&self.lsh_planes) {
            return Err(DedupError::Config("lsh_planes must lie in 1..=64".into()));
        }
        if self.lsh_tables == 0 {
            return Err(DedupError::Config("lsh_tables must be positive".into()));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f32 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f32>() + tail
}

// Cosine of two unit vectors.
#[inline]
fn unit_cosine(a: &[f32], b: &[f32]) -> f32 {
    dot(a, b).clamp(-1.0, 1.0)
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64, DedupError> {
    if a.len() != b.len() {
        return Err(DedupError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(DedupError::ZeroNorm);
    }
    Ok((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

fn unit(v: &[f32]) -> Result<Vec<f32>, DedupError> {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(DedupError::ZeroNorm);
    }
    Ok(v.iter().map(|&x| (x as f64 / norm) as f32).collect())
}

/// Outcome of offering one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Retained,
    Dropped { duplicate_of: String },
}

impl Decision {
    pub fn is_retained(&self) -> bool {
        matches!(self, Decision::Retained)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupStats {
    pub seen: usize,
    pub retained: usize,
    pub dropped: usize,
}

/// Append-only set of retained, unit-normalized embeddings.
#[derive(Debug, Clone)]
pub struct RetainedSet {
    dim: usize,
    tau: f32,
    ids: Vec<String>,
    vectors: Vec<f32>,
    lsh: Option<LshIndex>,
    stats: DedupStats,
}

impl RetainedSet {
    pub fn new(dim: usize, config: &DedupConfig) -> Result<Self, DedupError> {
        config.validate()?;
        let lsh = match config.index_kind {
            IndexKind::Exact => None,
            IndexKind::Lsh => Some(LshIndex::new(
                dim,
                config.lsh_planes,
                config.lsh_tables,
                config.lsh_seed,
            )),
        };
        Ok(RetainedSet {
            dim,
            tau: config.tau as f32,
            ids: Vec::new(),
            vectors: Vec::new(),
            lsh,
            stats: DedupStats::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn stats(&self) -> DedupStats {
        self.stats
    }

    /// Retained entries in retention order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.vectors.chunks_exact(self.dim.max(1)))
    }

    fn vector(&self, position: usize) -> &[f32] {
        &self.vectors[position * self.dim..(position + 1) * self.dim]
    }

    fn earliest_match(&self, v: &[f32]) -> Option<usize> {
        let tau = self.tau;
        match &self.lsh {
            Some(index) => index
                .candidates(v)
                .into_iter()
                .map(|p| p as usize)
                .find(|&p| unit_cosine(self.vector(p), v) > tau),
            None if self.len() >= PARALLEL_SCAN_MIN => self
                .vectors
                .par_chunks_exact(self.dim)
                .position_first(|r| unit_cosine(r, v) > tau),
            None => self
                .vectors
                .chunks_exact(self.dim)
                .position(|r| unit_cosine(r, v) > tau),
        }
    }

    /// Drops `item` if some retained entry has cosine > tau with it, naming
    /// the earliest such entry; otherwise retains it.
    pub fn offer(&mut self, item: &ImageItem) -> Result<Decision, DedupError> {
        if item.dim() != self.dim {
            return Err(DedupError::DimensionMismatch {
                expected: self.dim,
                found: item.dim(),
            });
        }
        let v = unit(&item.embedding)?;
        self.stats.seen += 1;
        if let Some(p) = self.earliest_match(&v) {
            self.stats.dropped += 1;
            return Ok(Decision::Dropped {
                duplicate_of: self.ids[p].clone(),
            });
        }
        let position = self.ids.len() as u32;
        if let Some(index) = &mut self.lsh {
            index.insert(position, &v);
        }
        self.ids.push(item.image_id.clone());
        self.vectors.extend_from_slice(&v);
        self.stats.retained += 1;
        Ok(Decision::Retained)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub image_id: String,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupReport {
    pub seen: usize,
    pub retained: usize,
    pub dropped: usize,
    pub reduction_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decisions: Option<Vec<DecisionRecord>>,
}

impl DedupReport {
    pub fn without_decisions(mut self) -> Self {
        self.decisions = None;
        self
    }
}

/// Streaming wrapper around a [`RetainedSet`] that keeps a decision log.
pub struct Deduplicator {
    set: RetainedSet,
    decisions: Vec<DecisionRecord>,
}

impl Deduplicator {
    pub fn new(dim: usize, config: &DedupConfig) -> Result<Self, DedupError> {
        Ok(Deduplicator {
            set: RetainedSet::new(dim, config)?,
            decisions: Vec::new(),
        })
    }

    /// Returns the pair back if it was retained.
    pub fn push(&mut self, pair: TextImagePair) -> Result<Option<TextImagePair>, DedupError> {
        let decision = self.set.offer(&pair.image)?;
        let (action, duplicate_of, keep) = match decision {
            Decision::Retained => ("retained", None, true),
            Decision::Dropped { duplicate_of } => ("dropped", Some(duplicate_of), false),
        };
        self.decisions.push(DecisionRecord {
            image_id: pair.image.image_id.clone(),
            action: action.into(),
            duplicate_of,
        });
        Ok(keep.then_some(pair))
    }

    pub fn retained_set(&self) -> &RetainedSet {
        &self.set
    }

    pub fn finish(self) -> DedupReport {
        let s = self.set.stats();
        DedupReport {
            seen: s.seen,
            retained: s.retained,
            dropped: s.dropped,
            reduction_fraction: if s.seen == 0 {
                0.0
            } else {
                s.dropped as f64 / s.seen as f64
            },
            decisions: Some(self.decisions),
        }
    }
}

/// Deduplicates an ordered stream of pairs, returning the retained pairs in
/// input order and a report with one decision per input.
pub fn dedup_stream<I>(
    pairs: I,
    dim: usize,
    config: &DedupConfig,
) -> Result<(Vec<TextImagePair>, DedupReport), DedupError>
where
    I: IntoIterator<Item = TextImagePair>,
{
    let mut dedup = Deduplicator::new(dim, config)?;
    let mut kept = Vec::new();
    for pair in pairs {
        if let Some(p) = dedup.push(pair)? {
            kept.push(p);
        }
    }
    Ok((kept, dedup.finish()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(id: &str, v: &[f32]) -> ImageItem {
        ImageItem::new(id, v.to_vec())
    }

    fn pair(id: &str, v: &[f32]) -> TextImagePair {
        TextImagePair {
            record_id: id.into(),
            created_at: 0,
            text: format!("text {id}"),
            image: item(id, v),
        }
    }

    #[test]
    fn cosine_reference_points() {
        assert!((cosine(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(DedupError::ZeroNorm));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(DedupError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn empty_set_retains() {
        let mut set = RetainedSet::new(3, &DedupConfig::default()).unwrap();
        assert_eq!(set.offer(&item("a", &[1.0, 2.0, 3.0])).unwrap(), Decision::Retained);
    }

    #[test]
    fn identical_vector_is_dropped_against_first_id() {
        for config in [DedupConfig::default(), DedupConfig::lsh()] {
            let mut set = RetainedSet::new(3, &config).unwrap();
            set.offer(&item("first", &[1.0, 2.0, 3.0])).unwrap();
            set.offer(&item("second", &[-3.0, 0.0, 1.0])).unwrap();
            assert_eq!(
                set.offer(&item("again", &[1.0, 2.0, 3.0])).unwrap(),
                Decision::Dropped {
                    duplicate_of: "first".into()
                }
            );
        }
    }

    #[test]
    fn orthogonal_vector_is_retained() {
        let mut set = RetainedSet::new(4, &DedupConfig::default()).unwrap();
        set.offer(&item("a", &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(set.offer(&item("b", &[0.0, 1.0, 0.0, 0.0])).unwrap().is_retained());
    }

    #[test]
    fn witness_is_the_earliest_retained_match() {
        let mut set = RetainedSet::new(2, &DedupConfig { tau: 0.9, ..Default::default() }).unwrap();
        set.offer(&item("a", &[1.0, 0.0])).unwrap();
        set.offer(&item("b", &[0.0, 1.0])).unwrap();
        // close to both a (cos≈0.707) and b; only b exceeds tau
        let d = set.offer(&item("c", &[0.1, 1.0])).unwrap();
        assert_eq!(d, Decision::Dropped { duplicate_of: "b".into() });
        let d = set.offer(&item("d", &[0.96, 0.28])).unwrap();
        assert_eq!(d, Decision::Dropped { duplicate_of: "a".into() });
    }

    #[test]
    fn comparison_is_against_retained_entries_only() {
        let config = DedupConfig { tau: 0.95, ..Default::default() };
        let angle = |deg: f32| {
            let r = deg.to_radians();
            [r.cos(), r.sin()]
        };
        // b ~ a is dropped; c ~ b but c ≁ a, so c survives
        let (_, report) = dedup_stream(
            [pair("a", &angle(0.0)), pair("b", &angle(15.0)), pair("c", &angle(30.0))],
            2,
            &config,
        )
        .unwrap();
        let actions: Vec<_> = report.decisions.unwrap().into_iter().map(|d| d.action).collect();
        assert_eq!(actions, ["retained", "dropped", "retained"]);
    }

    #[test]
    fn exact_copies_are_dropped_from_stream() {
        let mut pairs = Vec::new();
        for i in 0..8 {
            let mut v = vec![0.0f32; 8];
            v[i] = 1.0;
            pairs.push(pair(&format!("p{i}"), &v));
        }
        let copy_a = TextImagePair { image: item("dup0", &pairs[0].image.embedding), ..pairs[0].clone() };
        let copy_b = TextImagePair { image: item("dup5", &pairs[5].image.embedding), ..pairs[5].clone() };
        pairs.insert(3, copy_a);
        pairs.push(copy_b);
        let (kept, report) = dedup_stream(pairs, 8, &DedupConfig::default()).unwrap();
        assert_eq!((kept.len(), report.retained, report.dropped, report.seen), (8, 8, 2, 10));
        assert!((report.reduction_fraction - 0.2).abs() < 1e-12);
        assert!(kept.iter().all(|p| !p.image.image_id.starts_with("dup")));
    }

    #[test]
    fn dimension_mismatch_and_zero_vectors_error() {
        let mut set = RetainedSet::new(2, &DedupConfig::default()).unwrap();
        assert!(matches!(
            set.offer(&item("a", &[1.0, 0.0, 0.0])),
            Err(DedupError::DimensionMismatch { .. })
        ));
        assert_eq!(set.offer(&item("z", &[0.0, 0.0])), Err(DedupError::ZeroNorm));
        assert_eq!(set.stats().seen, 0);
    }

    #[test]
    fn config_validation() {
        assert!(DedupConfig { tau: -1.0, ..Default::default() }.validate().is_err());
        assert!(DedupConfig { tau: 1.0, ..Default::default() }.validate().is_ok());
        assert!(DedupConfig { lsh_planes: 65, ..Default::default() }.validate().is_err());
        assert!(DedupConfig { lsh_tables: 0, ..Default::default() }.validate().is_err());
    }

    proptest! {
        #[test]
        fn stored_vectors_are_unit_and_counters_balance(
            vs in prop::collection::vec(prop::collection::vec(-10.0f32..10.0, 6), 1..40)
        ) {
            let mut set = RetainedSet::new(6, &DedupConfig { tau: 0.9, ..Default::default() }).unwrap();
            for (i, v) in vs.iter().enumerate() {
                let _ = set.offer(&item(&format!("{i}"), v));
                let s = set.stats();
                prop_assert_eq!(s.seen, s.retained + s.dropped);
            }
            for (_, v) in set.entries() {
                let n = v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
                prop_assert!((n - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn exact_dedup_is_idempotent(
            vs in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 4), 1..40)
        ) {
            let config = DedupConfig { tau: 0.8, ..Default::default() };
            let pairs: Vec<_> = vs.iter().enumerate()
                .filter(|(_, v)| v.iter().any(|&x| x != 0.0))
                .map(|(i, v)| pair(&format!("{i}"), v)).collect();
            let (once, _) = dedup_stream(pairs, 4, &config).unwrap();
            let (twice, report) = dedup_stream(once.clone(), 4, &config).unwrap();
            prop_assert_eq!(report.dropped, 0);
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn cosine_stays_in_range(
            a in prop::collection::vec(-100.0f32..100.0, 5),
            b in prop::collection::vec(-100.0f32..100.0, 5),
        ) {
            if let Ok(c) = cosine(&a, &b) {
                prop_assert!((-1.0..=1.0).contains(&c));
            }
        }
    }
}
