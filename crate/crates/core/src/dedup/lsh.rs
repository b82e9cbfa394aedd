//! Sign-random-projection index for candidate generation.
//!
//! Each table hashes a unit vector to the sign pattern of its dot products
//! with `planes` Gaussian hyperplanes. Two vectors at angle θ agree on one
//! bit with probability 1 − θ/π, so near-duplicates collide in at least one
//! of the tables with high probability. Candidates still go through an exact
//! cosine check; the index never decides a drop on its own.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct LshIndex {
    dim: usize,
    planes_per_table: usize,
    // tables * planes_per_table rows of length dim
    planes: Vec<f32>,
    buckets: Vec<HashMap<u64, Vec<u32>>>,
}

impl LshIndex {
    pub fn new(dim: usize, planes_per_table: usize, tables: usize, seed: u64) -> Self {
        assert!((1..=64).contains(&planes_per_table));
        assert!(tables >= 1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planes = (0..tables * planes_per_table * dim)
            .map(|_| {
                let x: f32 = StandardNormal.sample(&mut rng);
                x
            })
            .collect();
        LshIndex {
            dim,
            planes_per_table,
            planes,
            buckets: vec![HashMap::new(); tables],
        }
    }

    pub fn tables(&self) -> usize {
        self.buckets.len()
    }

    fn signature(&self, table: usize, v: &[f32]) -> u64 {
        let stride = self.planes_per_table * self.dim;
        let block = &self.planes[table * stride..(table + 1) * stride];
        let mut sig = 0u64;
        for (bit, plane) in block.chunks_exact(self.dim).enumerate() {
            if super::dot(plane, v) >= 0.0 {
                sig |= 1 << bit;
            }
        }
        sig
    }

    fn signatures(&self, v: &[f32]) -> Vec<u64> {
        (0..self.tables()).map(|t| self.signature(t, v)).collect()
    }

    /// Retained positions sharing a bucket with `v` in any table, ascending.
    pub fn candidates(&self, v: &[f32]) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .signatures(v)
            .into_iter()
            .zip(&self.buckets)
            .filter_map(|(sig, table)| table.get(&sig))
            .flatten()
            .copied()
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn insert(&mut self, position: u32, v: &[f32]) {
        let sigs = self.signatures(v);
        for (sig, table) in sigs.into_iter().zip(&mut self.buckets) {
            table.entry(sig).or_default().push(position);
        }
    }
}
