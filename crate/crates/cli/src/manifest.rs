//! `manifest.json` documents written next to every command's outputs.
//!
//! Manifests hold only inputs, configuration and content digests, never
//! timestamps or thread counts, so identical runs produce identical files.

use std::collections::BTreeMap;
use std::path::Path;

use reefforge_core::fsutil::write_atomic;
use reefforge_core::rng::PRNG_ID;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub prng: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Header {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Self {
        Self {
            tool: "reefforge".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            prng: PRNG_ID.into(),
            seed: cfg.seed,
            config: cfg.echo(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub scene_id: String,
    pub seed: u64,
    pub oysters: usize,
    pub scene: String,
    pub depth: String,
    pub mask: String,
    pub preview: String,
    pub width: u32,
    pub height: u32,
    /// File path (relative to the output directory) → SHA-256.
    pub sha256: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateManifest {
    #[serde(flatten)]
    pub header: Header,
    pub scenes: Vec<SceneEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEntry {
    pub scene_ref: String,
    pub seed: u64,
    pub image: String,
    pub label: String,
    pub boxes: usize,
    pub references: Vec<String>,
    pub request_digest: String,
    pub backend_id: String,
    pub sha256: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthFailure {
    pub scene_ref: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    #[serde(flatten)]
    pub header: Header,
    pub scenes_dir: String,
    pub real_dir: String,
    pub backend: String,
    pub results: Vec<SynthEntry>,
    pub failures: Vec<SynthFailure>,
}

/// Manifest for eval, bench and report runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub header: Header,
    pub inputs: BTreeMap<String, serde_json::Value>,
    pub outputs: BTreeMap<String, String>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Validation(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes).map_err(CliError::io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Validation(format!("{}:{}:{}: {}", path.display(), e.line(), e.column(), e))
    })
}
