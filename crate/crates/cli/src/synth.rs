//! `gen-synthetic`: corpus, lexicons, optional benchmark and a runnable config.

use std::path::Path;

use anyhow::{Context, Result};

use distillstream::eval::{write_benchmark, EvalSpec};
use distillstream::synthetic::{gen_benchmark, write_synthetic, BenchmarkGen, GroundTruth, SyntheticFiles, SyntheticSpec};

use crate::pipeline::write_json;

pub const CONFIG: &str = "config.toml";
pub const BENCH_SPEC: &str = "bench_spec.json";
pub const BENCH_DATA: &str = "bench.jsonl";

/// Writes everything into `dir`. A benchmark is added when `bench_items > 0`;
/// it shares the corpus' class directions.
pub fn generate(dir: &Path, spec: &SyntheticSpec, bench_items: usize) -> Result<GroundTruth> {
    let truth = write_synthetic(dir, spec)?;
    let mut config = format!(
        "seed = {seed}\ndim = {dim}\ncorpus = \"{corpus}\"\noutput_dir = \"out\"\n\n\
         [teacher]\nkind = \"lexicon\"\npositive = \"{pos}\"\nnegative = \"{neg}\"\n",
        seed = spec.seed,
        dim = spec.dim,
        corpus = SyntheticFiles::CORPUS,
        pos = SyntheticFiles::POSITIVE,
        neg = SyntheticFiles::NEGATIVE,
    );
    if bench_items > 0 {
        let bench = EvalSpec::binary("synthetic", spec.seed);
        let items = gen_benchmark(
            &bench,
            &BenchmarkGen {
                n: bench_items,
                dim: spec.dim,
                noise_sigma: spec.noise_sigma,
                direction_seed: spec.seed,
                seed: spec.seed.wrapping_add(1),
            },
        )?;
        write_json(&dir.join(BENCH_SPEC), &bench)?;
        write_benchmark(&dir.join(BENCH_DATA), &items)?;
        config.push_str(&format!("\n[[eval]]\nspec = \"{BENCH_SPEC}\"\ndata = \"{BENCH_DATA}\"\n"));
    }
    std::fs::write(dir.join(CONFIG), config).with_context(|| format!("writing {}", dir.join(CONFIG).display()))?;
    Ok(truth)
}
