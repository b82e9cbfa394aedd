//! Fixtures shared by the criterion benches.

use distillstream::corpus::{explode_pairs, sort_stream, TextImagePair};
use distillstream::synthetic::{gen_synthetic, SyntheticCorpus, SyntheticSpec, NEGATIVE_WORDS, POSITIVE_WORDS};
use distillstream::teacher::{GatingConfig, LexiconScorer};
use distillstream::trainer::TrainingSample;

pub const DIM: usize = 64;

pub fn corpus(n_records: usize) -> SyntheticCorpus {
    gen_synthetic(&SyntheticSpec {
        n_records,
        dim: DIM,
        ..SyntheticSpec::default()
    })
    .expect("valid synthetic spec")
}

/// Sorted pair stream with the default 20% planted duplicates.
pub fn pairs(n_records: usize) -> Vec<TextImagePair> {
    let mut records = corpus(n_records).records;
    sort_stream(&mut records);
    records.iter().flat_map(explode_pairs).collect()
}

pub fn scorer() -> LexiconScorer {
    LexiconScorer::new(POSITIVE_WORDS, NEGATIVE_WORDS, 1.0).expect("disjoint lexicons")
}

/// Teacher-labelled, ungated samples.
pub fn samples(n_records: usize) -> Vec<TrainingSample> {
    let teacher = scorer();
    pairs(n_records)
        .into_iter()
        .map(|p| TrainingSample::new(p.image.embedding, teacher.score(&p.text), &GatingConfig::disabled()))
        .collect()
}
