//! Multimodal post records, corpus ingestion and the admission filter.

mod filter;
mod reader;
mod sidecar;
mod stopwords;

pub use filter::{admit, admit_with, FilterPolicy, LanguageCheck, Rejection, StopwordRatio};
pub use reader::{
    load_corpus, read_records, write_records, CorpusReader, MalformedPolicy, ReaderOptions,
};
pub use sidecar::{write_sidecar, EmbeddingSidecar};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: image `{image_id}` has embedding dimension {found}, expected {expected}")]
    DimensionMismatch {
        line: usize,
        image_id: String,
        expected: usize,
        found: usize,
    },
    #[error("sidecar: {0}")]
    Sidecar(String),
}

/// One image attached to a post, represented by its feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageItem {
    pub image_id: String,
    pub embedding: Vec<f32>,
}

impl ImageItem {
    pub fn new(image_id: impl Into<String>, embedding: Vec<f32>) -> Self {
        ImageItem {
            image_id: image_id.into(),
            embedding,
        }
    }

    pub fn dim(&self) -> usize {
        self.embedding.len()
    }

    pub fn is_finite(&self) -> bool {
        self.embedding.iter().all(|x| x.is_finite())
    }
}

/// One social-media post: text plus zero or more images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalRecord {
    pub id: String,
    pub text: String,
    pub is_retweet: bool,
    pub created_at: i64,
    pub images: Vec<ImageItem>,
}

/// A single (text, image) training pair cut from a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextImagePair {
    pub record_id: String,
    pub created_at: i64,
    pub text: String,
    pub image: ImageItem,
}

/// One pair per image, all sharing the record's text, in image order.
pub fn explode_pairs(record: &MultimodalRecord) -> Vec<TextImagePair> {
    record
        .images
        .iter()
        .map(|image| TextImagePair {
            record_id: record.id.clone(),
            created_at: record.created_at,
            text: record.text.clone(),
            image: image.clone(),
        })
        .collect()
}

/// Sorts records into the canonical stream order `(created_at, id)`.
pub fn sort_stream(records: &mut [MultimodalRecord]) {
    records.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
}

/// Maximal non-whitespace runs.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

pub fn word_count(text: &str) -> usize {
    words(text).count()
}

/// Lowercases a token and strips punctuation, keeping inner apostrophes.
pub fn normalize_word(token: &str) -> String {
    let cleaned: String = token
        .chars()
        .map(|c| if c == '\u{2019}' { '\'' } else { c })
        .filter(|c| c.is_alphanumeric() || *c == '\'')
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.trim_matches('\'').to_string()
}
