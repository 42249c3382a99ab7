//! Run configuration and input hashes embedded in every artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use geotag_core::synth::{NoiseConfig, SynthConfig};
use geotag_core::{DetectionSet, PipelineConfig, ThresholdMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub detection_seed: u64,
    pub scene: SynthConfig,
    pub noise: NoiseConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub mode: String,
    pub accuracy_iou: f64,
}

/// Every knob that can change an output, plus the paths it read and wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tool_version: String,
    pub command: String,
    pub radius_m: f64,
    pub step_deg: f64,
    pub iou_x_min: f64,
    pub threshold: ThresholdMode,
    pub batch_size: usize,
    pub seed: u64,
    pub flip_heading: bool,
    pub indexed_sweep: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalParams>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn new(command: &str, pipeline: &PipelineConfig) -> Self {
        RunConfig {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            radius_m: pipeline.radius_m,
            step_deg: pipeline.step_deg,
            iou_x_min: pipeline.iou_x_min,
            threshold: pipeline.threshold,
            batch_size: pipeline.batch_size,
            seed: pipeline.seed,
            flip_heading: pipeline.heading == geotag_core::HeadingConvention::Flipped,
            indexed_sweep: pipeline.indexed_sweep,
            synth: None,
            eval: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(mut self, role: &str, path: &Path) -> Self {
        self.inputs.insert(role.to_string(), path.display().to_string());
        self
    }

    pub fn output(mut self, role: &str, path: &Path) -> Self {
        self.outputs.insert(role.to_string(), path.display().to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub run_config: RunConfig,
    /// SHA-256 per input role.
    pub input_hashes: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(run_config: RunConfig) -> Self {
        Provenance {
            run_config,
            input_hashes: BTreeMap::new(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Hash of the detection content the pipeline consumes (panorama, box,
/// score). Detector categories never reach the pipeline, so they are not
/// part of the hash either.
pub fn hash_detections(dets: &DetectionSet) -> String {
    sha256_hex(serde_json::to_string(dets).expect("detections serialize").as_bytes())
}

/// Pretty JSON with a trailing newline; stable for identical values.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
