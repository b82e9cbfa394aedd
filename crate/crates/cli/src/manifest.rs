//! Run manifest: counts per stage, training and eval summaries, timings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use distillstream::dedup::DedupReport;
use distillstream::eval::EvalResult;
use distillstream::trainer::{ClassBreakdown, TrainReport};

use crate::config::LoadedConfig;
use crate::pipeline::{self, write_json, AtStage, IngestReport, LabelReport, Stage, StageError};

pub const MANIFEST_JSON: &str = "manifest.json";
pub const MANIFEST_TXT: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub gated: usize,
    pub ungated: usize,
    pub classes: Vec<ClassBreakdown>,
    pub train_size: usize,
    pub heldout_size: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub heldout_agreement: Option<f64>,
    pub checkpoint_sha256: String,
}

impl TrainingSummary {
    fn new(r: &TrainReport, checkpoint_sha256: String) -> Self {
        TrainingSummary {
            gated: r.gated,
            ungated: r.ungated,
            classes: r.classes.clone(),
            train_size: r.train_size,
            heldout_size: r.heldout_size,
            epochs_run: r.epochs.len(),
            best_epoch: r.best_epoch,
            heldout_agreement: r.heldout_agreement,
            checkpoint_sha256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub benchmark: String,
    pub fine_tune: bool,
    pub mean: f64,
    pub std: f64,
    pub summary: String,
}

impl From<&EvalResult> for EvalSummary {
    fn from(r: &EvalResult) -> Self {
        EvalSummary {
            benchmark: r.benchmark.clone(),
            fine_tune: r.fine_tune,
            mean: r.mean,
            std: r.std,
            summary: r.summary(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    /// Set when a stage failed; later sections are then missing.
    pub partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    pub ingest: Option<IngestReport>,
    pub dedup: Option<DedupReport>,
    pub label: Option<LabelReport>,
    pub training: Option<TrainingSummary>,
    pub evals: Vec<EvalSummary>,
    /// The only field that varies between identical runs.
    pub wall_clock_ms: BTreeMap<String, u64>,
}

impl Manifest {
    pub fn new(cfg: &LoadedConfig) -> Self {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.hash(),
            seed: cfg.config.seed,
            partial: false,
            failure: None,
            ingest: None,
            dedup: None,
            label: None,
            training: None,
            evals: Vec::new(),
            wall_clock_ms: BTreeMap::new(),
        }
    }

    /// Checks the count algebra between stages.
    pub fn check_counts(&self) -> Result<(), String> {
        if let (Some(i), Some(d)) = (&self.ingest, &self.dedup) {
            if d.seen != i.pairs {
                return Err(format!("dedup saw {} pairs, ingest admitted {}", d.seen, i.pairs));
            }
        }
        if let Some(d) = &self.dedup {
            if d.retained > d.seen || d.retained + d.dropped != d.seen {
                return Err(format!("dedup counts inconsistent: {d:?}"));
            }
            if let Some(t) = &self.training {
                let gated: usize = t.classes.iter().map(|c| c.gated).sum();
                if gated > d.retained || gated != t.gated {
                    return Err(format!("gated {gated} vs retained {}", d.retained));
                }
            }
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "distillstream {}  seed {}  config {}", self.tool_version, self.seed, &self.config_hash[..12]);
        if let Some(f) = &self.failure {
            let _ = writeln!(s, "PARTIAL: {} stage failed: {}", f.stage, f.error);
        }
        let _ = writeln!(s);
        if let Some(i) = &self.ingest {
            let _ = writeln!(s, "{:<22}{:>10}", "records read", i.records_read);
            let _ = writeln!(s, "{:<22}{:>10}", "malformed skipped", i.skipped_malformed);
            let _ = writeln!(s, "{:<22}{:>10}", "rejected", i.rejected.total());
            let _ = writeln!(s, "{:<22}{:>10}", "admitted records", i.admitted);
            let _ = writeln!(s, "{:<22}{:>10}", "text-image pairs", i.pairs);
        }
        if let Some(d) = &self.dedup {
            let _ = writeln!(
                s,
                "{:<22}{:>10}  (dropped {}, {:.1}%)",
                "after dedup",
                d.retained,
                d.dropped,
                100.0 * d.reduction_fraction
            );
        }
        if let Some(t) = &self.training {
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<10}{:>10}{:>10}{:>10}", "polarity", "tweets", "images", "gated");
            let (mut tw, mut im, mut ga) = (0, 0, 0);
            for c in &t.classes {
                let _ = writeln!(s, "{:<10}{:>10}{:>10}{:>10}", c.class.as_str(), c.tweets, c.images, c.gated);
                tw += c.tweets;
                im += c.images;
                ga += c.gated;
            }
            let _ = writeln!(s, "{:<10}{:>10}{:>10}{:>10}", "total", tw, im, ga);
            let _ = writeln!(s);
            let agreement = t
                .heldout_agreement
                .map_or_else(|| "n/a".to_string(), |a| format!("{:.1}", 100.0 * a));
            let _ = writeln!(
                s,
                "train {}  held-out {}  epochs {} (best {})  agreement {}",
                t.train_size, t.heldout_size, t.epochs_run, t.best_epoch, agreement
            );
        }
        if !self.evals.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<20}{:<12}{:>12}", "benchmark", "mode", "accuracy");
            for e in &self.evals {
                let mode = if e.fine_tune { "fine-tuned" } else { "zero-shot" };
                let _ = writeln!(s, "{:<20}{:<12}{:>12}", e.benchmark, mode, e.summary);
            }
        }
        let _ = writeln!(s);
        for (stage, ms) in &self.wall_clock_ms {
            let _ = writeln!(s, "{stage:<10}{ms:>8} ms");
        }
        s
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        write_json(&out.join(MANIFEST_JSON), self)?;
        std::fs::write(out.join(MANIFEST_TXT), self.render())?;
        Ok(())
    }
}

fn timed<T>(manifest: &mut Manifest, stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T, StageError> {
    let start = Instant::now();
    let out = f().at(stage);
    manifest
        .wall_clock_ms
        .insert(stage.as_str().to_string(), start.elapsed().as_millis() as u64);
    out
}

/// Runs every stage in order and writes the manifest, also on failure.
pub fn run_pipeline(cfg: &LoadedConfig, verbose: bool) -> Result<Manifest, (Manifest, StageError)> {
    let mut m = Manifest::new(cfg);
    let out = cfg.output_dir();
    let result = run_stages(cfg, &out, verbose, &mut m);
    if let Err(e) = &result {
        m.partial = true;
        m.failure = Some(Failure {
            stage: e.stage,
            error: format!("{:#}", e.cause),
        });
    }
    let written = m.write(&out).at(Stage::Eval);
    match (result, written) {
        (Err(e), _) | (Ok(()), Err(e)) => Err((m, e)),
        (Ok(()), Ok(())) => Ok(m),
    }
}

fn run_stages(cfg: &LoadedConfig, out: &Path, verbose: bool, m: &mut Manifest) -> Result<(), StageError> {
    cfg.check_inputs().at(Stage::Config)?;
    m.ingest = Some(timed(m, Stage::Ingest, || pipeline::ingest(cfg, out))?);
    m.dedup = Some(timed(m, Stage::Dedup, || pipeline::dedup(cfg, out, verbose))?);
    m.label = Some(timed(m, Stage::Label, || pipeline::label(cfg, out))?);
    let report = timed(m, Stage::Train, || pipeline::train(cfg, out, out, &cfg.config.train))?;
    let ckpt = pipeline::sha256_file(&out.join(pipeline::CHECKPOINT)).at(Stage::Train)?;
    m.training = Some(TrainingSummary::new(&report, ckpt));
    let evals = timed(m, Stage::Eval, || pipeline::eval(cfg, out, false))?;
    m.evals = evals.iter().map(EvalSummary::from).collect();
    m.check_counts()
        .map_err(|e| anyhow::anyhow!("manifest count check: {e}"))
        .at(Stage::Eval)
}
