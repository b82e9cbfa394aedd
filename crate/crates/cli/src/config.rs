//! Run configuration: one TOML file, optional `key=value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use distillstream::corpus::{FilterPolicy, MalformedPolicy};
use distillstream::dedup::DedupConfig;
use distillstream::trainer::TrainConfig;

pub const OUT_ENV: &str = "DISTILLSTREAM_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TeacherConfig {
    Lexicon {
        positive: PathBuf,
        negative: PathBuf,
        #[serde(default = "unit_temperature")]
        temperature: f64,
    },
    Precomputed {
        path: PathBuf,
    },
}

fn unit_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidecarConfig {
    pub bin: PathBuf,
    pub index: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalEntry {
    pub spec: PathBuf,
    pub data: PathBuf,
    #[serde(default)]
    pub fine_tune: bool,
}

/// Everything a run needs. Relative paths are relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Drives training, splitting and the LSH planes.
    #[serde(default)]
    pub seed: u64,
    pub dim: usize,
    pub corpus: PathBuf,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub malformed: MalformedPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<SidecarConfig>,
    pub teacher: TeacherConfig,
    #[serde(default)]
    pub filter: FilterPolicy,
    #[serde(default)]
    pub dedup: DedupConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: Vec<EvalEntry>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// A parsed config plus where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    output_override: Option<PathBuf>,
}

impl LoadedConfig {
    /// Reads `path`, applies `overrides` in order, then `seed` if given.
    pub fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Self::from_str(&raw, base_dir, overrides, seed)
    }

    pub fn from_str(raw: &str, base_dir: PathBuf, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let mut value: toml::Table = raw.parse().context("parsing config")?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        if let Some(seed) = seed {
            let seed = i64::try_from(seed).context("seed out of range")?;
            value.insert("seed".into(), toml::Value::Integer(seed));
        }
        let mut config: RunConfig = toml::Value::Table(value).try_into().context("invalid config")?;
        // one seed for the whole run
        config.train.seed = config.seed;
        config.dedup.lsh_seed = config.seed;
        config.validate()?;
        Ok(LoadedConfig {
            config,
            base_dir,
            output_override: std::env::var_os(OUT_ENV).map(PathBuf::from),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        match &self.output_override {
            Some(p) => p.clone(),
            None => self.resolve(&self.config.output_dir),
        }
    }

    pub fn set_output_dir(&mut self, dir: PathBuf) {
        self.output_override = Some(dir);
    }

    /// Checks that every referenced input exists.
    pub fn check_inputs(&self) -> Result<()> {
        let c = &self.config;
        let mut paths = vec![&c.corpus];
        match &c.teacher {
            TeacherConfig::Lexicon { positive, negative, .. } => paths.extend([positive, negative]),
            TeacherConfig::Precomputed { path } => paths.push(path),
        }
        if let Some(s) = &c.sidecar {
            paths.extend([&s.bin, &s.index]);
        }
        for e in &c.eval {
            paths.extend([&e.spec, &e.data]);
        }
        for p in paths {
            let r = self.resolve(p);
            if !r.exists() {
                bail!("input {} does not exist", r.display());
            }
        }
        Ok(())
    }

    /// sha256 of the effective config. The output location is left out
    /// because it does not affect any result.
    pub fn hash(&self) -> String {
        let mut c = self.config.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            bail!("dim must be positive");
        }
        self.filter.validate().map_err(|e| anyhow!("filter: {e}"))?;
        self.dedup.validate().map_err(|e| anyhow!("dedup: {e}"))?;
        self.train.validate().map_err(|e| anyhow!("train: {e}"))?;
        if let TeacherConfig::Lexicon { temperature, .. } = self.teacher {
            if !(temperature > 0.0 && temperature.is_finite()) {
                bail!("teacher temperature must be positive");
            }
        }
        Ok(())
    }
}

/// Applies `a.b.c=value` to a TOML table. The value is read as TOML and
/// falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not key=value"))?;
    let value = parse_value(raw.trim());
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().filter(|k| !k.is_empty()).ok_or_else(|| anyhow!("empty key in `{spec}`"))?;
    let mut node = table;
    for part in parts {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("`{part}` in `{key}` is not a table"))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
