//! Orchestration for the distillation pipeline: config loading, the staged
//! run with on-disk artifacts, manifests, ablations and fixture generation.

pub mod ablation;
pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod synth;

pub use config::{LoadedConfig, RunConfig};
pub use manifest::{run_pipeline, Manifest};
pub use pipeline::{Stage, StageError};
