//! Polarity classes and distributions over them.
//!
//! The class order is fixed everywhere as (positive, neutral, negative):
//! files, reports, model outputs and thresholds all index classes this way.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of polarity classes.
pub const NUM_CLASSES: usize = 3;

/// Tolerance on `sum(p) == 1` for a [`SentimentDistribution`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Three-way sentiment polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Neutral,
    Negative,
}

impl Polarity {
    pub const ALL: [Polarity; NUM_CLASSES] =
        [Polarity::Positive, Polarity::Neutral, Polarity::Negative];

    pub fn index(self) -> usize {
        match self {
            Polarity::Positive => 0,
            Polarity::Neutral => 1,
            Polarity::Negative => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Polarity> {
        Polarity::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Positive => "positive",
            Polarity::Neutral => "neutral",
            Polarity::Negative => "negative",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Polarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "positive" => Ok(Polarity::Positive),
            "neutral" => Ok(Polarity::Neutral),
            "negative" => Ok(Polarity::Negative),
            other => Err(format!("unknown polarity `{other}`")),
        }
    }
}

/// Polarity used by binary benchmarks, where the neutral class does not exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryPolarity {
    Positive,
    Negative,
}

impl BinaryPolarity {
    pub fn as_polarity(self) -> Polarity {
        match self {
            BinaryPolarity::Positive => Polarity::Positive,
            BinaryPolarity::Negative => Polarity::Negative,
        }
    }

    pub fn flipped(self) -> BinaryPolarity {
        match self {
            BinaryPolarity::Positive => BinaryPolarity::Negative,
            BinaryPolarity::Negative => BinaryPolarity::Positive,
        }
    }
}

impl fmt::Display for BinaryPolarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_polarity().as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("component {index} = {value} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("components sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
}

/// A point on the 3-class probability simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SentimentDistribution([f64; NUM_CLASSES]);

impl SentimentDistribution {
    /// Validates that `p` lies on the simplex within [`SIMPLEX_TOLERANCE`].
    pub fn new(p: [f64; NUM_CLASSES]) -> Result<Self, DistributionError> {
        Self::with_tolerance(p, SIMPLEX_TOLERANCE)
    }

    /// Accepts sums within `tolerance` of one and renormalizes exactly.
    ///
    /// Teacher outputs exported in single precision rarely sum to one within
    /// 1e-9; this is the entry point for such external data.
    pub fn normalized(p: [f64; NUM_CLASSES], tolerance: f64) -> Result<Self, DistributionError> {
        let d = Self::with_tolerance(p, tolerance)?;
        let sum: f64 = d.0.iter().sum();
        Ok(SentimentDistribution(d.0.map(|x| x / sum)))
    }

    fn with_tolerance(p: [f64; NUM_CLASSES], tolerance: f64) -> Result<Self, DistributionError> {
        for (index, &value) in p.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(DistributionError::OutOfRange { index, value });
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > tolerance {
            return Err(DistributionError::NotNormalized { sum });
        }
        Ok(SentimentDistribution(p))
    }

    pub fn uniform() -> Self {
        SentimentDistribution([1.0 / 3.0; NUM_CLASSES])
    }

    pub fn one_hot(class: Polarity) -> Self {
        let mut p = [0.0; NUM_CLASSES];
        p[class.index()] = 1.0;
        SentimentDistribution(p)
    }

    /// Numerically stable softmax of three logits.
    pub fn softmax(logits: [f64; NUM_CLASSES]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps = logits.map(|z| (z - max).exp());
        let total: f64 = exps.iter().sum();
        SentimentDistribution(exps.map(|e| e / total))
    }

    pub fn probs(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn get(&self, class: Polarity) -> f64 {
        self.0[class.index()]
    }

    /// Most probable class; ties go to the earliest class in
    /// (positive, neutral, negative) order.
    pub fn argmax(&self) -> Polarity {
        let mut best = 0;
        for k in 1..NUM_CLASSES {
            if self.0[k] > self.0[best] {
                best = k;
            }
        }
        Polarity::ALL[best]
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.0
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }
}

impl<'de> Deserialize<'de> for SentimentDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let p = <[f64; NUM_CLASSES]>::deserialize(deserializer)?;
        SentimentDistribution::normalized(p, 1e-6).map_err(serde::de::Error::custom)
    }
}
