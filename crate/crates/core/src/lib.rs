//! Building blocks for training an image sentiment classifier from a text
//! sentiment teacher over deduplicated text-image posts.

pub mod corpus;
pub mod dedup;
pub mod eval;
pub mod sentiment;
pub mod synthetic;
pub mod teacher;
pub mod trainer;

pub use sentiment::{BinaryPolarity, Polarity, SentimentDistribution, NUM_CLASSES};
