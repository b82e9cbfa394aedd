//! Retrains under several gating thresholds over one shared
//! ingest/dedup/label cache.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use distillstream::teacher::GatingConfig;
use distillstream::trainer::TrainConfig;
use distillstream::NUM_CLASSES;

use crate::config::LoadedConfig;
use crate::manifest::EvalSummary;
use crate::pipeline::{self, write_json, AtStage, Stage, StageError};

pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_TXT: &str = "ablation.txt";

pub fn default_grid() -> Vec<GatingConfig> {
    vec![
        GatingConfig::disabled(),
        GatingConfig::uniform(0.70),
        GatingConfig::default(),
    ]
}

/// Parses `"0,0,0;.7,.7,.7;.9,.9,.7"`.
pub fn parse_grid(s: &str) -> Result<Vec<GatingConfig>> {
    let mut grid = Vec::new();
    for row in s.split(';').map(str::trim).filter(|r| !r.is_empty()) {
        let vals = row
            .split(',')
            .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad threshold `{v}`")))
            .collect::<Result<Vec<_>>>()?;
        let c: [f64; NUM_CLASSES] = vals
            .try_into()
            .map_err(|_| anyhow::anyhow!("grid row `{row}` needs three thresholds"))?;
        grid.push(GatingConfig::new(c)?);
    }
    if grid.is_empty() {
        bail!("empty ablation grid");
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub thresholds: [f64; NUM_CLASSES],
    /// Gated samples per class, (positive, neutral, negative).
    pub gated: [usize; NUM_CLASSES],
    pub gated_total: usize,
    pub heldout_agreement: Option<f64>,
    pub evals: Vec<EvalSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub config_hash: String,
    pub seed: u64,
    pub retained: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let benches: Vec<&str> = self
            .rows
            .first()
            .map(|r| r.evals.iter().map(|e| e.benchmark.as_str()).collect())
            .unwrap_or_default();
        let _ = write!(s, "{:>6}{:>6}{:>6}{:>9}{:>11}", "c_pos", "c_neu", "c_neg", "gated", "agreement");
        for b in &benches {
            let _ = write!(s, "{b:>14}");
        }
        let _ = writeln!(s);
        for r in &self.rows {
            let [p, u, n] = r.thresholds;
            let agreement = r
                .heldout_agreement
                .map_or_else(|| "n/a".to_string(), |a| format!("{:.1}", 100.0 * a));
            let _ = write!(s, "{p:>6.2}{u:>6.2}{n:>6.2}{:>9}{agreement:>11}", r.gated_total);
            for e in &r.evals {
                let _ = write!(s, "{:>14}", format!("{:.1}", 100.0 * e.mean));
            }
            let _ = writeln!(s);
        }
        s
    }
}

/// Builds the shared cache once, then trains and zero-shot evaluates one
/// student per grid entry under `<out>/ablation/row_<i>`.
pub fn run_ablation(cfg: &LoadedConfig, grid: &[GatingConfig]) -> Result<AblationReport, StageError> {
    if grid.is_empty() {
        return Err(anyhow::anyhow!("empty ablation grid")).at(Stage::Config);
    }
    cfg.check_inputs().at(Stage::Config)?;
    let out = cfg.output_dir();
    pipeline::ingest(cfg, &out).at(Stage::Ingest)?;
    let dedup = pipeline::dedup(cfg, &out, false).at(Stage::Dedup)?;
    pipeline::label(cfg, &out).at(Stage::Label)?;
    let rows = grid
        .iter()
        .enumerate()
        .map(|(i, g)| row(cfg, &out, &out.join("ablation").join(format!("row_{i}")), g))
        .collect::<Result<Vec<_>, _>>()?;
    let report = AblationReport {
        config_hash: cfg.hash(),
        seed: cfg.config.seed,
        retained: dedup.retained,
        rows,
    };
    write_json(&out.join(ABLATION_JSON), &report).at(Stage::Eval)?;
    std::fs::write(out.join(ABLATION_TXT), report.render())
        .map_err(anyhow::Error::from)
        .at(Stage::Eval)?;
    Ok(report)
}

fn row(cfg: &LoadedConfig, cache: &Path, out: &Path, gating: &GatingConfig) -> Result<AblationRow, StageError> {
    let config = TrainConfig {
        gating: *gating,
        ..cfg.config.train.clone()
    };
    let report = pipeline::train(cfg, cache, out, &config).at(Stage::Train)?;
    let evals = pipeline::eval(cfg, out, true).at(Stage::Eval)?;
    let mut gated = [0; NUM_CLASSES];
    for c in &report.classes {
        gated[c.class.index()] = c.gated;
    }
    Ok(AblationRow {
        thresholds: gating.c,
        gated,
        gated_total: report.gated,
        heldout_agreement: report.heldout_agreement,
        evals: evals.iter().map(EvalSummary::from).collect(),
    })
}
