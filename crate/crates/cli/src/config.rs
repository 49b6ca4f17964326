use std::path::Path;

use actioncodec::baselines::{BinningConfig, DctBpeConfig};
use actioncodec::data::SynthConfig;
use actioncodec::model::CodecConfig;
use actioncodec::objectives::TrainConfig;
use actioncodec::policy::PolicyConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every command reads the sections it needs from one JSON file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub codec: Option<CodecConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub posttrain: Option<PostTrainRun>,
    #[serde(default)]
    pub eval: EvalRun,
    #[serde(default)]
    pub compare: CompareRun,
    #[serde(default)]
    pub perturb: Option<PerturbRun>,
    #[serde(default)]
    pub transfer: Option<TransferRun>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "one")]
    pub stride: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostTrainRun {
    pub depth: usize,
    pub train: TrainConfig,
    #[serde(default = "default_audit")]
    pub audit_chunks: usize,
}

fn default_audit() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRun {
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default = "default_samples")]
    pub artifact_samples: usize,
    #[serde(default = "default_anchors")]
    pub artifact_anchors: usize,
}

fn default_sigmas() -> Vec<f64> {
    vec![0.01, 0.02, 0.05, 0.1]
}
fn default_samples() -> usize {
    200
}
fn default_anchors() -> usize {
    20
}

impl Default for EvalRun {
    fn default() -> Self {
        Self {
            sigmas: default_sigmas(),
            artifact_samples: default_samples(),
            artifact_anchors: default_anchors(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareRun {
    #[serde(default = "default_baseline_horizon")]
    pub baseline_horizon: usize,
    #[serde(default = "default_precision")]
    pub string_precision: usize,
    #[serde(default)]
    pub binning: BinningConfig,
    #[serde(default)]
    pub dct_bpe: DctBpeConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Simulated generation cost per token.
    #[serde(default = "default_delay")]
    pub token_delay_ms: f64,
}

fn default_baseline_horizon() -> usize {
    8
}
fn default_precision() -> usize {
    3
}
fn default_trials() -> usize {
    50
}
fn default_delay() -> f64 {
    5.0
}

impl Default for CompareRun {
    fn default() -> Self {
        Self {
            baseline_horizon: default_baseline_horizon(),
            string_precision: default_precision(),
            binning: BinningConfig::default(),
            dct_bpe: DctBpeConfig::default(),
            trials: default_trials(),
            token_delay_ms: default_delay(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbRun {
    pub policy: PolicyConfig,
    pub steps: usize,
    #[serde(default = "default_perturb_trials")]
    pub trials: usize,
    /// Trajectories with index divisible by this are held out.
    #[serde(default = "default_val_every")]
    pub val_every: usize,
}

fn default_perturb_trials() -> usize {
    100
}
fn default_val_every() -> usize {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferRun {
    pub from: String,
    pub to: String,
    #[serde(default = "one")]
    pub chunks: usize,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }
}

/// The named section, or a config error naming it.
pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    section
        .as_ref()
        .ok_or_else(|| CliError::config(format!("missing config field `{name}`")))
}
