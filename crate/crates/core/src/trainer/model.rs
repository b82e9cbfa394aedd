use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::sentiment::{Polarity, SentimentDistribution, NUM_CLASSES};
use crate::teacher::{gate, GatingConfig};

/// Floor applied to student probabilities before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    #[default]
    Linear,
    Mlp1,
}

/// Dense parameters. Matrices are row-major: `w1` is `n × h`, `w2` is
/// `m × 3` with `m = n` (linear) or `m = h` (mlp1). `w1`/`b1` are empty for
/// the linear student.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Params {
        Params {
            w1: vec![0.0; other.w1.len()],
            b1: vec![0.0; other.b1.len()],
            w2: vec![0.0; other.w2.len()],
            b2: vec![0.0; other.b2.len()],
        }
    }

    pub fn tensors(&self) -> [(&'static str, &[f64]); 4] {
        [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2)
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Zeroes every entry feeding the logit of `class`.
    pub fn freeze_class(&mut self, class: Polarity) {
        let k = class.index();
        for row in self.w2.chunks_exact_mut(NUM_CLASSES) {
            row[k] = 0.0;
        }
        self.b2[k] = 0.0;
    }
}

/// Map from an embedding to a distribution over the three classes.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel {
    pub architecture: Architecture,
    pub n: usize,
    pub h: usize,
    pub params: Params,
}

impl StudentModel {
    /// Linear student with all-zero weights (uniform output).
    pub fn linear(n: usize) -> Self {
        StudentModel {
            architecture: Architecture::Linear,
            n,
            h: 0,
            params: Params {
                w1: Vec::new(),
                b1: Vec::new(),
                w2: vec![0.0; n * NUM_CLASSES],
                b2: vec![0.0; NUM_CLASSES],
            },
        }
    }

    /// One-hidden-layer ReLU student. `W1 ~ N(0, 2/n)`, `W2 ~ N(0, 1/h)`,
    /// biases zero.
    pub fn mlp1(n: usize, h: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let he = Normal::new(0.0, (2.0 / n as f64).sqrt()).unwrap();
        let xavier = Normal::new(0.0, (1.0 / h as f64).sqrt()).unwrap();
        StudentModel {
            architecture: Architecture::Mlp1,
            n,
            h,
            params: Params {
                w1: (0..n * h).map(|_| he.sample(&mut rng)).collect(),
                b1: vec![0.0; h],
                w2: (0..h * NUM_CLASSES).map(|_| xavier.sample(&mut rng)).collect(),
                b2: vec![0.0; NUM_CLASSES],
            },
        }
    }

    pub fn init(architecture: Architecture, n: usize, h: usize, seed: u64) -> Self {
        match architecture {
            Architecture::Linear => Self::linear(n),
            Architecture::Mlp1 => Self::mlp1(n, h, seed),
        }
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().count()
    }

    fn check_dim(&self, x: &[f32]) -> Result<(), TrainError> {
        if x.len() == self.n {
            Ok(())
        } else {
            Err(TrainError::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            })
        }
    }

    /// Hidden activations (post-ReLU) for mlp1, or `x` itself for linear.
    fn features(&self, x: &[f64], hidden: &mut Vec<f64>) {
        hidden.clear();
        match self.architecture {
            Architecture::Linear => hidden.extend_from_slice(x),
            Architecture::Mlp1 => {
                hidden.extend_from_slice(&self.params.b1);
                for (xi, row) in x.iter().zip(self.params.w1.chunks_exact(self.h)) {
                    for (a, w) in hidden.iter_mut().zip(row) {
                        *a += xi * w;
                    }
                }
                // backward recovers the ReLU mask as `hidden > 0`
                hidden.iter_mut().for_each(|a| *a = a.max(0.0));
            }
        }
    }

    fn head(&self, features: &[f64]) -> [f64; NUM_CLASSES] {
        let mut z = [0.0; NUM_CLASSES];
        z.copy_from_slice(&self.params.b2);
        for (f, row) in features.iter().zip(self.params.w2.chunks_exact(NUM_CLASSES)) {
            for k in 0..NUM_CLASSES {
                z[k] += f * row[k];
            }
        }
        z
    }

    pub fn logits(&self, x: &[f32]) -> Result<[f64; NUM_CLASSES], TrainError> {
        self.check_dim(x)?;
        let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let mut hidden = Vec::new();
        self.features(&x, &mut hidden);
        Ok(self.head(&hidden))
    }

    pub fn forward(&self, x: &[f32]) -> Result<SentimentDistribution, TrainError> {
        Ok(SentimentDistribution::softmax(self.logits(x)?))
    }

    /// Adds the gradient of `−Σ g_k log f_k(x)` to `grads`; returns the loss.
    pub(crate) fn accumulate(
        &self,
        x: &[f64],
        target: &SentimentDistribution,
        grads: &mut Params,
        hidden: &mut Vec<f64>,
    ) -> f64 {
        self.features(x, hidden);
        let z = self.head(hidden);
        let f = SentimentDistribution::softmax(z);
        let loss = cross_entropy(target, &z);
        let mut dz = [0.0; NUM_CLASSES];
        for k in 0..NUM_CLASSES {
            dz[k] = f.probs()[k] - target.probs()[k];
            grads.b2[k] += dz[k];
        }
        for (fj, row) in hidden.iter().zip(grads.w2.chunks_exact_mut(NUM_CLASSES)) {
            for k in 0..NUM_CLASSES {
                row[k] += fj * dz[k];
            }
        }
        if self.architecture == Architecture::Mlp1 {
            for j in 0..self.h {
                if hidden[j] <= 0.0 {
                    continue;
                }
                let w = &self.params.w2[j * NUM_CLASSES..(j + 1) * NUM_CLASSES];
                let da: f64 = (0..NUM_CLASSES).map(|k| w[k] * dz[k]).sum();
                grads.b1[j] += da;
                for (i, xi) in x.iter().enumerate() {
                    grads.w1[i * self.h + j] += xi * da;
                }
            }
        }
        loss
    }
}

/// `−Σ g_k log softmax(z)_k`, with log-probabilities floored at
/// `ln(LOG_CLAMP)`.
fn cross_entropy(target: &SentimentDistribution, z: &[f64; NUM_CLASSES]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    let floor = LOG_CLAMP.ln();
    target
        .probs()
        .iter()
        .zip(z)
        .filter(|(g, _)| **g > 0.0)
        .map(|(g, zk)| -g * (zk - lse).max(floor))
        .sum()
}

/// One (embedding, teacher output) pair after gating.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub embedding: Vec<f32>,
    pub teacher_dist: SentimentDistribution,
    pub multiplier: u8,
    pub argmax_class: Polarity,
}

impl TrainingSample {
    pub fn new(embedding: Vec<f32>, teacher_dist: SentimentDistribution, gating: &GatingConfig) -> Self {
        let g = gate(&teacher_dist, gating);
        TrainingSample {
            embedding,
            teacher_dist,
            multiplier: g.multiplier,
            argmax_class: g.argmax_class,
        }
    }

    /// Always-on sample with a fixed target.
    pub fn supervised(embedding: Vec<f32>, target: SentimentDistribution) -> Self {
        TrainingSample {
            embedding,
            argmax_class: target.argmax(),
            teacher_dist: target,
            multiplier: 1,
        }
    }

    pub fn is_gated_in(&self) -> bool {
        self.multiplier == 1
    }
}

/// `λ · H(g, f)`: zero for gated-out samples.
pub fn sample_loss(model: &StudentModel, sample: &TrainingSample) -> Result<f64, TrainError> {
    if sample.multiplier == 0 {
        return Ok(0.0);
    }
    let z = model.logits(&sample.embedding)?;
    Ok(cross_entropy(&sample.teacher_dist, &z))
}

/// Mean loss and its exact gradient over the gated-in samples of `batch`.
///
/// Gated-out samples are skipped entirely, so they add nothing to either
/// the loss or the gradient, and do not count toward the mean.
pub fn backward(model: &StudentModel, batch: &[TrainingSample]) -> Result<(f64, Params), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut grads = Params::zeros_like(&model.params);
    let mut hidden = Vec::with_capacity(model.h.max(model.n));
    let mut x = Vec::with_capacity(model.n);
    let (mut total, mut count) = (0.0, 0usize);
    for s in batch {
        model.check_dim(&s.embedding)?;
        if s.multiplier == 0 {
            continue;
        }
        x.clear();
        x.extend(s.embedding.iter().map(|&v| v as f64));
        total += model.accumulate(&x, &s.teacher_dist, &mut grads, &mut hidden);
        count += 1;
    }
    if count == 0 {
        return Ok((0.0, grads));
    }
    grads.scale(1.0 / count as f64);
    Ok((total / count as f64, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: [f64; 3]) -> SentimentDistribution {
        SentimentDistribution::new(p).unwrap()
    }

    #[test]
    fn zero_linear_model_is_uniform() {
        let m = StudentModel::linear(4);
        let f = m.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        for p in f.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_bias_wins() {
        let mut m = StudentModel::linear(2);
        m.params.b2 = vec![10.0, 0.0, 0.0];
        let f = m.forward(&[0.3, 0.7]).unwrap();
        assert_eq!(f.argmax(), Polarity::Positive);
        assert!(f.get(Polarity::Positive) > 0.9999);
    }

    #[test]
    fn wrong_input_dimension_is_an_error() {
        let m = StudentModel::mlp1(3, 4, 0);
        assert!(matches!(
            m.forward(&[1.0, 2.0]),
            Err(TrainError::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn gated_out_sample_has_zero_loss_and_gradient() {
        let m = StudentModel::mlp1(3, 5, 1);
        let s = TrainingSample::new(vec![1.0, 2.0, 3.0], dist([0.5, 0.3, 0.2]), &GatingConfig::default());
        assert_eq!(s.multiplier, 0);
        assert_eq!(sample_loss(&m, &s).unwrap(), 0.0);
        let (loss, g) = backward(&m, &[s]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn perfect_match_on_one_hot_has_near_zero_loss() {
        let mut m = StudentModel::linear(1);
        m.params.b2 = vec![60.0, 0.0, 0.0];
        let s = TrainingSample::supervised(vec![0.0], SentimentDistribution::one_hot(Polarity::Positive));
        assert!(sample_loss(&m, &s).unwrap() < 1e-12);
    }

    #[test]
    fn uniform_student_loss_is_ln3() {
        let m = StudentModel::linear(2);
        for p in [[1.0, 0.0, 0.0], [0.2, 0.5, 0.3], [0.0, 0.1, 0.9]] {
            let s = TrainingSample::supervised(vec![0.4, -1.0], dist(p));
            assert!((sample_loss(&m, &s).unwrap() - 3f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn clamp_bounds_loss_for_saturated_mismatch() {
        let mut m = StudentModel::linear(1);
        m.params.b2 = vec![1000.0, 0.0, 0.0];
        let s = TrainingSample::supervised(vec![0.0], SentimentDistribution::one_hot(Polarity::Negative));
        let loss = sample_loss(&m, &s).unwrap();
        assert!((loss - (-LOG_CLAMP.ln())).abs() < 1e-9);
    }

    #[test]
    fn linear_logit_gradient_is_outer_product() {
        let mut m = StudentModel::linear(3);
        m.params.w2 = vec![0.1, -0.2, 0.3, 0.0, 0.5, -0.4, 0.2, 0.2, 0.1];
        m.params.b2 = vec![0.05, 0.0, -0.05];
        let x = [0.5f32, -1.5, 2.0];
        let g = dist([0.6, 0.3, 0.1]);
        let f = m.forward(&x).unwrap();
        let (_, grads) = backward(&m, &[TrainingSample::supervised(x.to_vec(), g)]).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                let expected = x[i] as f64 * (f.probs()[k] - g.probs()[k]);
                assert!((grads.w2[i * 3 + k] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empty_batch_is_rejected() {
        assert!(matches!(backward(&StudentModel::linear(2), &[]), Err(TrainError::EmptyBatch)));
    }

    #[test]
    fn mlp_init_is_seeded() {
        assert_eq!(StudentModel::mlp1(4, 8, 3), StudentModel::mlp1(4, 8, 3));
        assert_ne!(StudentModel::mlp1(4, 8, 3), StudentModel::mlp1(4, 8, 4));
        assert_eq!(StudentModel::mlp1(4, 8, 3).num_params(), 4 * 8 + 8 + 8 * 3 + 3);
    }
}
