//! Acceptance suite. Every test prints one `PASS`/`FAIL` line, then asserts.
//!
//! Oracles here are written independently of the library code they check.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use distillstream::corpus::{explode_pairs, sort_stream, TextImagePair};
use distillstream::dedup::{dedup_stream, DedupConfig, DEFAULT_TAU};
use distillstream::eval::{
    evaluate, kfold_splits, masked_predict, random_splits_80_5_15, EvalMode, EvalSpec, LabelSpace, LabeledSample,
};
use distillstream::synthetic::{gen_synthetic, SyntheticSpec};
use distillstream::teacher::{gate, GatingConfig};
use distillstream::trainer::{backward, sample_loss, Architecture, Checkpoint, StudentModel, TrainingSample};
use distillstream::{BinaryPolarity, Polarity, SentimentDistribution};
use distillstream_cli::ablation::{default_grid, run_ablation};
use distillstream_cli::pipeline::{self, CHECKPOINT};
use distillstream_cli::{run_pipeline, synth, LoadedConfig};

fn verdict(name: &str, ok: bool, detail: String) {
    println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "{name}: {detail}");
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data")
}

/// Uniform draw from the probability simplex.
fn simplex(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let e: [f64; 3] = std::array::from_fn(|_| -(1.0 - rng.random::<f64>()).ln());
    let s: f64 = e.iter().sum();
    e.map(|x| x / s)
}

fn dist(p: [f64; 3]) -> SentimentDistribution {
    SentimentDistribution::normalized(p, 1e-9).unwrap()
}

#[test]
fn gating_correctness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let c = [0.90, 0.90, 0.70];
    let config = GatingConfig { c };
    let (mut mismatches, mut passed) = (0, 0);
    let mut samples = Vec::new();
    for i in 0..10_000 {
        let d = dist(simplex(&mut rng));
        let p = d.probs();
        let k = if p[0] >= p[1] && p[0] >= p[2] { 0 } else if p[1] >= p[2] { 1 } else { 2 };
        let reference = u8::from(p[k] >= c[k]);
        let g = gate(&d, &config);
        mismatches += usize::from(g.multiplier != reference || g.argmax_class.index() != k);
        passed += usize::from(reference == 1);
        if i < 200 {
            let emb: Vec<f32> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            samples.push(TrainingSample::new(emb, d, &config));
        }
    }
    // exactly zero loss and gradient from multiplier-0 samples
    let mut model = StudentModel::mlp1(4, 5, 3);
    model.params.b2 = vec![0.3, -0.2, 0.1];
    let gated_out: Vec<_> = samples.iter().filter(|s| s.multiplier == 0).cloned().collect();
    let gated_in: Vec<_> = samples.iter().filter(|s| s.multiplier == 1).cloned().collect();
    let zero_loss = gated_out.iter().all(|s| sample_loss(&model, s).unwrap() == 0.0);
    let (_, g_out) = backward(&model, &gated_out).unwrap();
    let zero_grad = g_out.iter().all(|g| *g == 0.0);
    let (l_mixed, g_mixed) = backward(&model, &samples).unwrap();
    let (l_in, g_in) = backward(&model, &gated_in).unwrap();
    let same = l_mixed == l_in && g_mixed == g_in;
    let elapsed = start.elapsed();
    verdict(
        "gating correctness",
        mismatches == 0 && zero_loss && zero_grad && same && !gated_out.is_empty() && elapsed < Duration::from_secs(1),
        format!(
            "{mismatches} mismatches over 10000 points ({passed} gated in); zero loss {zero_loss}, zero grad {zero_grad}, mixed batch identical {same}; {elapsed:?}"
        ),
    );
}

#[test]
fn loss_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let open = GatingConfig::disabled();
    let uniform = StudentModel::linear(3);
    let x = [0.4f32, -1.3, 2.0];
    let (mut worst_ln3, mut worst_eq, mut below_entropy, mut not_strict) = (0.0f64, 0.0f64, 0, 0);
    for _ in 0..1000 {
        let g = simplex(&mut rng);
        let sample = TrainingSample::new(x.to_vec(), dist(g), &open);
        worst_ln3 = worst_ln3.max((sample_loss(&uniform, &sample).unwrap() - 3f64.ln()).abs());

        let entropy: f64 = -g.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
        // student whose output equals the teacher
        let mut matched = StudentModel::linear(3);
        matched.params.b2 = g.iter().map(|p| p.ln()).collect();
        worst_eq = worst_eq.max((sample_loss(&matched, &sample).unwrap() - entropy).abs());

        let mut other = StudentModel::linear(3);
        other.params.w2.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        other.params.b2.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let loss = sample_loss(&other, &sample).unwrap();
        let f = other.forward(&x).unwrap();
        below_entropy += usize::from(loss < entropy - 1e-9);
        let differs = f.probs().iter().zip(&g).any(|(a, b)| (a - b).abs() > 1e-6);
        not_strict += usize::from(differs && loss <= entropy);
    }
    let elapsed = start.elapsed();
    verdict(
        "loss identities",
        worst_ln3 <= 1e-9 && worst_eq <= 1e-9 && below_entropy == 0 && not_strict == 0 && elapsed < Duration::from_secs(1),
        format!(
            "max |L-ln3| {worst_ln3:.2e}, max |L-H| at f=g {worst_eq:.2e}, {below_entropy} below entropy, {not_strict} non-strict at f!=g; {elapsed:?}"
        ),
    );
}

/// Mean gated cross-entropy computed from the raw parameters.
fn oracle_loss(m: &StudentModel, batch: &[TrainingSample]) -> f64 {
    let p = &m.params;
    let (mut total, mut count) = (0.0, 0);
    for s in batch.iter().filter(|s| s.multiplier == 1) {
        let x: Vec<f64> = s.embedding.iter().map(|&v| v as f64).collect();
        let feats: Vec<f64> = match m.architecture {
            Architecture::Linear => x,
            Architecture::Mlp1 => (0..m.h)
                .map(|j| (p.b1[j] + (0..m.n).map(|i| x[i] * p.w1[i * m.h + j]).sum::<f64>()).max(0.0))
                .collect(),
        };
        let z: Vec<f64> = (0..3)
            .map(|k| p.b2[k] + feats.iter().enumerate().map(|(j, f)| f * p.w2[j * 3 + k]).sum::<f64>())
            .collect();
        let lse = z.iter().map(|v| v.exp()).sum::<f64>().ln();
        total -= (0..3).map(|k| s.teacher_dist.probs()[k] * (z[k] - lse)).sum::<f64>();
        count += 1;
    }
    total / count as f64
}

fn pre_activations(m: &StudentModel, x: &[f32]) -> Vec<f64> {
    (0..m.h)
        .map(|j| m.params.b1[j] + (0..m.n).map(|i| x[i] as f64 * m.params.w1[i * m.h + j]).sum::<f64>())
        .collect()
}

#[test]
fn gradient_oracle() {
    const STEP: f64 = 1e-5;
    const TOL: f64 = 1e-5;
    // relative error denominator floor: below this magnitude the comparison
    // is effectively absolute (1e-5 * 1e-4 = 1e-9)
    const FLOOR: f64 = 1e-4;
    // inputs whose ReLU pre-activations sit within this margin of zero are
    // redrawn, so a central difference never straddles the kink
    const KINK_MARGIN: f64 = 1e-3;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gating = GatingConfig::default();
    let mut worst = [0.0f64; 2];
    let mut failures = [0usize; 2];
    let mut checked = [0usize; 2];
    for (a, arch) in [Architecture::Linear, Architecture::Mlp1].into_iter().enumerate() {
        let mut instances = 0;
        while instances < 100 {
            let n = rng.random_range(2..=8);
            let h = rng.random_range(2..=6);
            let mut model = StudentModel::init(arch, n, h, rng.random());
            for t in model.params.tensors_mut() {
                t.iter_mut().for_each(|w| *w += rng.random_range(-0.5..0.5));
            }
            let mut batch = Vec::new();
            while batch.len() < rng.random_range(1..=6) || !batch.iter().any(|s: &TrainingSample| s.is_gated_in()) {
                let x: Vec<f32> = loop {
                    let x: Vec<f32> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
                    if arch == Architecture::Linear
                        || pre_activations(&model, &x).iter().all(|v| v.abs() > KINK_MARGIN)
                    {
                        break x;
                    }
                };
                // mix sharp (often gated in) and flat teacher outputs
                let g = if rng.random_bool(0.5) {
                    let k = rng.random_range(0..3);
                    let mut p = [0.02; 3];
                    p[k] = 0.96;
                    dist(p)
                } else {
                    dist(simplex(&mut rng))
                };
                batch.push(TrainingSample::new(x, g, &gating));
            }
            let (loss, grads) = backward(&model, &batch).unwrap();
            assert!((loss - oracle_loss(&model, &batch)).abs() < 1e-12);
            let analytic: Vec<f64> = grads.iter().copied().collect();
            let mut idx = 0;
            for t in 0..4 {
                for i in 0..model.params.tensors()[t].1.len() {
                    let orig = model.params.tensors()[t].1[i];
                    model.params.tensors_mut()[t][i] = orig + STEP;
                    let up = oracle_loss(&model, &batch);
                    model.params.tensors_mut()[t][i] = orig - STEP;
                    let down = oracle_loss(&model, &batch);
                    model.params.tensors_mut()[t][i] = orig;
                    let numeric = (up - down) / (2.0 * STEP);
                    let rel = (analytic[idx] - numeric).abs() / analytic[idx].abs().max(numeric.abs()).max(FLOOR);
                    worst[a] = worst[a].max(rel);
                    failures[a] += usize::from(rel >= TOL);
                    checked[a] += 1;
                    idx += 1;
                }
            }
            instances += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "gradient oracle",
        failures == [0, 0] && elapsed < Duration::from_secs(30),
        format!(
            "linear: {} params, max rel err {:.2e}; mlp1: {} params, max rel err {:.2e}; 100 instances each; {elapsed:?}",
            checked[0], worst[0], checked[1], worst[1]
        ),
    );
}

/// O(n²) first-wins reference in f64.
fn brute_force_dedup(pairs: &[TextImagePair], tau: f64) -> Vec<Option<String>> {
    let unit: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| {
            let v: Vec<f64> = p.image.embedding.iter().map(|&x| x as f64).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for i in 0..pairs.len() {
        let hit = kept
            .iter()
            .find(|&&j| unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum::<f64>() > tau);
        match hit {
            Some(&j) => out.push(Some(pairs[j].image.image_id.clone())),
            None => {
                kept.push(i);
                out.push(None);
            }
        }
    }
    out
}

#[test]
fn dedup_oracle_equivalence() {
    let start = Instant::now();
    let spec = SyntheticSpec {
        n_records: 1000,
        dup_rate: 0.2,
        ..SyntheticSpec::default()
    };
    let corpus = gen_synthetic(&spec).unwrap();
    let mut records = corpus.records.clone();
    sort_stream(&mut records);
    let pairs: Vec<TextImagePair> = records.iter().flat_map(explode_pairs).collect();

    let (_, exact) = dedup_stream(pairs.clone(), spec.dim, &DedupConfig::default()).unwrap();
    let exact_decisions: Vec<Option<String>> = exact
        .decisions
        .unwrap()
        .into_iter()
        .map(|d| d.duplicate_of)
        .collect();
    let oracle = brute_force_dedup(&pairs, DEFAULT_TAU);
    let equal = exact_decisions == oracle;

    let dropped: HashSet<&str> = pairs
        .iter()
        .zip(&exact_decisions)
        .filter(|(_, d)| d.is_some())
        .map(|(p, _)| p.image.image_id.as_str())
        .collect();
    let planted_exact: Vec<&str> = corpus
        .truth
        .records
        .iter()
        .flat_map(|r| &r.images)
        .filter(|i| i.exact)
        .map(|i| i.image_id.as_str())
        .collect();
    let exact_caught = planted_exact.iter().filter(|id| dropped.contains(*id)).count();

    let (_, lsh) = dedup_stream(pairs.clone(), spec.dim, &DedupConfig::lsh()).unwrap();
    let lsh_dropped: HashSet<&str> = pairs
        .iter()
        .zip(lsh.decisions.as_ref().unwrap())
        .filter(|(_, d)| d.duplicate_of.is_some())
        .map(|(p, _)| p.image.image_id.as_str())
        .collect();
    let recall = dropped.intersection(&lsh_dropped).count() as f64 / dropped.len() as f64;
    let elapsed = start.elapsed();
    verdict(
        "dedup oracle equivalence",
        equal
            && !planted_exact.is_empty()
            && exact_caught == planted_exact.len()
            && recall >= 0.95
            && elapsed < Duration::from_secs(10),
        format!(
            "exact index == brute force: {equal} ({} pairs, {} dropped); planted exact dropped {exact_caught}/{}; LSH recall {recall:.4}; {elapsed:?}",
            pairs.len(),
            dropped.len(),
            planted_exact.len()
        ),
    );
}

#[test]
fn threshold_monotonicity() {
    let grid = default_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut violations = 0;
    // random teacher outputs over many corpora, sharp and flat alike
    for _ in 0..200 {
        let size = rng.random_range(1..500);
        let sharpness = rng.random_range(0.2..8.0);
        let dists: Vec<SentimentDistribution> = (0..size)
            .map(|_| {
                let z: [f64; 3] = std::array::from_fn(|_| sharpness * rng.random_range(-1.0..1.0));
                SentimentDistribution::softmax(z)
            })
            .collect();
        let counts: Vec<usize> = grid
            .iter()
            .map(|g| dists.iter().map(|d| gate(d, g).multiplier as usize).sum())
            .collect();
        violations += counts.windows(2).filter(|w| w[1] > w[0]).count();
    }
    // and the ablation runner itself on the bundled demo
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = LoadedConfig::load(&data_dir().join("demo/config.toml"), &[], None).unwrap();
    cfg.set_output_dir(tmp.path().to_path_buf());
    let report = run_ablation(&cfg, &grid).unwrap();
    let rows: Vec<usize> = report.rows.iter().map(|r| r.gated_total).collect();
    let runner_ok = rows.windows(2).all(|w| w[1] <= w[0]);
    verdict(
        "threshold monotonicity",
        violations == 0 && runner_ok,
        format!("{violations} violations over 200 random corpora; demo ablation gated counts {rows:?}"),
    );
}

#[test]
fn end_to_end_distillation() {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    pool.install(|| {
        let start = Instant::now();
        let spec: SyntheticSpec = toml::from_str(&fs::read_to_string(data_dir().join("e2e/spec.toml")).unwrap()).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let truth = synth::generate(tmp.path(), &spec, 0).unwrap();
        let expected_hash = fs::read_to_string(data_dir().join("e2e/corpus.sha256")).unwrap();
        let hash = hex::encode(Sha256::digest(fs::read(tmp.path().join("corpus.jsonl")).unwrap()));
        assert_eq!(hash, expected_hash.trim(), "generated corpus drifted from the bundled fixture");

        let mut cfg = LoadedConfig::load(&tmp.path().join(synth::CONFIG), &[], None).unwrap();
        let out = tmp.path().join("out");
        cfg.set_output_dir(out.clone());
        let manifest = run_pipeline(&cfg, false).map_err(|(_, e)| e).unwrap();
        let agreement = manifest.training.as_ref().unwrap().heldout_agreement.unwrap();

        let model = Checkpoint::load(&out.join(CHECKPOINT)).unwrap().to_model().unwrap();
        let pairs: Vec<TextImagePair> = fs::read_to_string(out.join(pipeline::PAIRS))
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        let class: HashMap<&str, Polarity> = truth.records.iter().map(|r| (r.id.as_str(), r.class)).collect();
        let accuracy = |m: &StudentModel| {
            let hits = pairs
                .iter()
                .filter(|p| m.forward(&p.image.embedding).unwrap().argmax() == class[p.record_id.as_str()])
                .count();
            hits as f64 / pairs.len() as f64
        };
        let trained = accuracy(&model);
        let untrained = accuracy(&StudentModel::linear(spec.dim));
        let elapsed = start.elapsed();
        verdict(
            "end-to-end distillation",
            agreement >= 0.95
                && trained >= 0.90
                && (untrained - 1.0 / 3.0).abs() <= 0.03
                && elapsed < Duration::from_secs(60),
            format!(
                "held-out agreement {:.1}%, ground-truth accuracy {:.1}% vs untrained {:.1}% over {} pairs; single thread {elapsed:?}",
                100.0 * agreement,
                100.0 * trained,
                100.0 * untrained,
                pairs.len()
            ),
        );
    });
}

fn params_hash(m: &StudentModel) -> String {
    let mut h = Sha256::new();
    for v in m.params.iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[test]
fn protocol_fidelity() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut problems: Vec<String> = Vec::new();

    for m in [5usize, 10, 11, 37, 250] {
        let ids: Vec<usize> = (0..m).collect();
        let folds = kfold_splits(&ids, 5, rng.random()).unwrap();
        let mut seen = BTreeSet::new();
        for (train, test) in &folds {
            let t: HashSet<_> = test.iter().collect();
            if train.iter().any(|x| t.contains(x)) || train.len() + test.len() != m {
                problems.push(format!("kfold train/test overlap at M={m}"));
            }
            for x in test {
                if !seen.insert(*x) {
                    problems.push(format!("kfold test folds intersect at M={m}"));
                }
            }
        }
        if seen.len() != m {
            problems.push(format!("kfold test folds do not cover M={m}"));
        }
    }
    for m in [20usize, 21, 99, 100, 1234] {
        let ids: Vec<usize> = (0..m).collect();
        for s in random_splits_80_5_15(&ids, 5, rng.random()).unwrap() {
            let sizes = (s.train.len(), s.val.len(), s.test.len());
            if sizes != (m * 80 / 100, m * 5 / 100, m - m * 80 / 100 - m * 5 / 100) {
                problems.push(format!("80/5/15 sizes {sizes:?} at M={m}"));
            }
        }
    }

    let mut neutral = 0;
    for _ in 0..2000 {
        let mut model = StudentModel::mlp1(4, 3, rng.random());
        model.params.b2[1] = rng.random_range(0.0..10.0);
        let x: Vec<f32> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
        let pred = masked_predict(&model, &x).unwrap();
        let f = model.forward(&x).unwrap();
        let expected = if f.get(Polarity::Negative) > f.get(Polarity::Positive) {
            BinaryPolarity::Negative
        } else {
            BinaryPolarity::Positive
        };
        neutral += usize::from(pred.as_polarity() == Polarity::Neutral);
        if pred != expected {
            problems.push("masked_predict disagrees with the masking rule".into());
        }
    }
    if neutral > 0 {
        problems.push(format!("{neutral} neutral predictions"));
    }

    let table = |spec: &EvalSpec| -> (BTreeSet<String>, BTreeSet<String>) {
        let pick = |b| spec.remap.iter().filter(|(_, v)| **v == b).map(|(k, _)| k.clone()).collect();
        (pick(BinaryPolarity::Positive), pick(BinaryPolarity::Negative))
    };
    let set = |words: &[&str]| words.iter().map(|w| w.to_string()).collect::<BTreeSet<_>>();
    if table(&EvalSpec::fi(0)) != (set(&["Awe", "Amusement", "Excitement", "Contentment"]), set(&["Anger", "Disgust", "Fear", "Sadness"]))
    {
        problems.push("FI remap table".into());
    }
    if table(&EvalSpec::emotion_roi(0)) != (set(&["Joy", "Surprise"]), set(&["Anger", "Disgust", "Fear", "Sadness"])) {
        problems.push("EmotionROI remap table".into());
    }
    if EvalSpec::fi(0).label_space != LabelSpace::Emotions8 || EvalSpec::emotion_roi(0).label_space != LabelSpace::Emotions6 {
        problems.push("label space sizes".into());
    }

    // reporting format and zero-shot immutability
    let data: Vec<LabeledSample> = (0..60)
        .map(|i| LabeledSample {
            id: format!("s{i}"),
            label: if i % 2 == 0 { "positive" } else { "negative" }.into(),
            embedding: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let model = StudentModel::mlp1(4, 6, 9);
    let before = params_hash(&model);
    let snapshot = model.clone();
    let result = evaluate(&model, &EvalSpec::binary("TD", 1), &data, EvalMode::ZeroShot).unwrap();
    if params_hash(&model) != before || model != snapshot {
        problems.push("zero-shot evaluation changed parameters".into());
    }
    let accs: Vec<f64> = result.per_split.iter().map(|s| s.accuracy).collect();
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let std = (accs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / accs.len() as f64).sqrt();
    let formatted = result.summary();
    let expected = format!("{:.1}±{:.1}", 100.0 * mean, 100.0 * std);
    let (m_str, s_str) = formatted.split_once('±').unwrap_or(("", ""));
    let shape_ok = [m_str, s_str]
        .iter()
        .all(|p| p.split_once('.').is_some_and(|(a, b)| !a.is_empty() && b.len() == 1 && a.chars().chain(b.chars()).all(|c| c.is_ascii_digit())));
    if formatted != expected || !shape_ok || (result.std - std).abs() > 1e-12 {
        problems.push(format!("report `{formatted}` vs expected `{expected}`"));
    }

    verdict(
        "protocol fidelity",
        problems.is_empty(),
        if problems.is_empty() {
            format!("folds, 80/5/15 floors, masking, remap tables, `{formatted}` format, zero-shot immutability all hold")
        } else {
            problems.join("; ")
        },
    );
}

fn run_binary(config: &Path, out: &Path, threads: &str) {
    let status = Command::new(env!("CARGO_BIN_EXE_distillstream"))
        .args(["run", "--seed", "7", "--threads", threads, "--config"])
        .arg(config)
        .env("DISTILLSTREAM_OUT", out)
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
}

fn manifest_without_timings(path: &Path) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_clock_ms");
    v
}

#[test]
fn determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let config = data_dir().join("demo/config.toml");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_binary(&config, &a, "1");
    run_binary(&config, &b, "4");
    let manifests = manifest_without_timings(&a.join("manifest.json")) == manifest_without_timings(&b.join("manifest.json"));
    let mut differing = Vec::new();
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        let is_artifact = name == CHECKPOINT || name.starts_with("eval_") || name.ends_with(".jsonl") || name.ends_with("_report.json");
        if is_artifact && fs::read(a.join(&name)).unwrap() != fs::read(b.join(&name)).unwrap() {
            differing.push(name);
        }
    }
    let evals = fs::read_dir(&a).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("eval_")).count();
    verdict(
        "determinism",
        manifests && differing.is_empty() && evals > 0,
        format!(
            "manifests equal modulo wall clock: {manifests}; checkpoint, {evals} eval report(s) and stage artifacts byte-identical: {} (1 vs 4 threads)",
            differing.is_empty()
        ),
    );
}
