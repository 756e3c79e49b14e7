//! JSON run configuration for `train`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vocaltrack_core::fusion::{FusionConfig, FusionTrainConfig};
use vocaltrack_core::unet::{TrainConfig, UNetConfig};

use crate::error::{CliError, CliResult, Context};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AudioSource {
    None,
    /// Log mel-band energies computed on the fly.
    Stub,
    /// Precomputed speech-model features referenced by the manifest.
    Real,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `unet` or `fusion`.
    pub model_kind: String,
    pub seed: u64,
    /// Corpus manifest with ground-truth trajectories.
    pub manifest: PathBuf,
    /// Share of clips (taken from the end of the manifest) held out for
    /// validation.
    pub val_fraction: f64,
    /// Use every n-th frame of each clip for U-Net training.
    pub frame_stride: usize,
    pub run_dir: PathBuf,
    pub unet: UNetConfig,
    pub train: TrainConfig,
    pub fusion: FusionConfig,
    pub fusion_train: FusionTrainConfig,
    /// Frozen U-Net providing the fusion model's keypoints.
    pub unet_checkpoint: Option<PathBuf>,
    pub audio: AudioSource,
    /// Temporal filter width applied to U-Net keypoints (0 disables).
    pub smooth_sigma: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model_kind: "unet".into(),
            seed: 0,
            manifest: PathBuf::from("manifest.json"),
            val_fraction: 0.2,
            frame_stride: 1,
            run_dir: PathBuf::from("run"),
            unet: UNetConfig::default(),
            train: TrainConfig::default(),
            fusion: FusionConfig::default(),
            fusion_train: FusionTrainConfig::default(),
            unet_checkpoint: None,
            audio: AudioSource::Stub,
            smooth_sigma: 1.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Unet,
    Fusion,
}

impl RunConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).usage(&format!("cannot read config {}", path.display()))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).usage(&format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.manifest);
        fix(&mut cfg.run_dir);
        if let Some(p) = cfg.unet_checkpoint.as_mut() {
            fix(p);
        }
        cfg.kind()?;
        Ok(cfg)
    }

    pub fn kind(&self) -> CliResult<ModelKind> {
        match self.model_kind.as_str() {
            "unet" => Ok(ModelKind::Unet),
            "fusion" => Ok(ModelKind::Fusion),
            other => Err(CliError::Usage(format!(
                "unknown model_kind '{other}' (expected 'unet' or 'fusion')"
            ))),
        }
    }
}
