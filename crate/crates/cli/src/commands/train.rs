//! `vocaltrack train`: fit a U-Net or fusion model from a run config.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use vocaltrack_core::fusion::{evaluate_fusion, extract_pitch, train_fusion, FusionModel, FusionReport, FusionSample};
use vocaltrack_core::io::Manifest;
use vocaltrack_core::metrics::{aggregate, evaluate_clip, CorpusMetrics};
use vocaltrack_core::unet::{predict_keypoints, train as train_unet, TrainReport, TrainSample, UNet};

use crate::config::{AudioSource, ModelKind, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::pipeline::{clip_features, filter_for, load_clip, load_reference, load_unet, unet_keypoints, with_workers};

pub const CHECKPOINT_FILE: &str = "checkpoint.vtck";
pub const LOG_FILE: &str = "train_log.json";

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub model_kind: String,
    pub seed: u64,
    pub checkpoint: PathBuf,
    pub train_clips: Vec<String>,
    pub val_clips: Vec<String>,
    pub final_train_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    /// Keypoint metrics of the trained model on the validation clips.
    pub val_metrics: Option<CorpusMetrics>,
    /// Fusion only: validation loss with the audio channels zeroed.
    pub val_loss_zero_audio: Option<f64>,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unet_report: Option<TrainReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fusion_report: Option<FusionReport>,
}

fn split(manifest: &Manifest, val_fraction: f64) -> CliResult<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(CliError::Usage(format!("val_fraction {val_fraction} must lie in [0, 1)")));
    }
    let n = manifest.clips.len();
    if n == 0 {
        return Err(CliError::Runtime("manifest lists no clips".into()));
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).min(n - 1);
    Ok(((0..n - n_val).collect(), (n - n_val..n).collect()))
}

pub fn run(cfg: &RunConfig, workers: usize) -> CliResult<TrainSummary> {
    let kind = cfg.kind()?;
    std::fs::create_dir_all(&cfg.run_dir).usage(&format!("cannot create run dir {}", cfg.run_dir.display()))?;
    let echo = serde_json::to_string_pretty(cfg).expect("config serializes");
    std::fs::write(cfg.run_dir.join("config.json"), echo + "\n").runtime("writing config echo")?;
    let manifest = Manifest::load(&cfg.manifest)?;
    let (train_idx, val_idx) = split(&manifest, cfg.val_fraction)?;
    let start = Instant::now();
    let mut summary = match kind {
        ModelKind::Unet => with_workers(workers, || run_unet(cfg, &manifest, &train_idx, &val_idx))??,
        ModelKind::Fusion => with_workers(workers, || run_fusion(cfg, &manifest, &train_idx, &val_idx))??,
    };
    summary.seconds = start.elapsed().as_secs_f64();
    let log = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(cfg.run_dir.join(LOG_FILE), log + "\n").runtime("writing train log")?;
    Ok(summary)
}

fn ids(manifest: &Manifest, idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&i| manifest.clips[i].clip_id.clone()).collect()
}

fn run_unet(cfg: &RunConfig, manifest: &Manifest, train_idx: &[usize], val_idx: &[usize]) -> CliResult<TrainSummary> {
    let stride = cfg.frame_stride.max(1);
    let collect = |idx: &[usize]| -> CliResult<Vec<TrainSample>> {
        let mut out = Vec::new();
        for &i in idx {
            let rec = &manifest.clips[i];
            let clip = load_clip(manifest, rec)?;
            let reference = load_reference(manifest, rec)?;
            if reference.len() != clip.frames.len() {
                return Err(CliError::Runtime(format!("clip '{}': trajectory and frames differ in length", rec.clip_id)));
            }
            for t in (0..clip.frames.len()).step_by(stride) {
                out.push(TrainSample {
                    frame: clip.frames[t].clone(),
                    points: reference.frame(t),
                });
            }
        }
        Ok(out)
    };
    let train_set = collect(train_idx)?;
    let val_set = collect(val_idx)?;
    let mut unet_cfg = cfg.unet.clone();
    unet_cfg.seed = cfg.seed;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    let checkpoint = cfg.run_dir.join(CHECKPOINT_FILE);
    train_cfg.checkpoint_path = Some(checkpoint.clone());
    let mut model = UNet::build(&unet_cfg).usage("invalid U-Net config")?;
    let report = train_unet(&mut model, &train_set, &val_set, &train_cfg)?;
    let filter = filter_for(cfg.smooth_sigma)?;
    let val_metrics = if val_idx.is_empty() {
        None
    } else {
        let clips = val_idx
            .par_iter()
            .map(|&i| {
                let rec = &manifest.clips[i];
                let clip = load_clip(manifest, rec)?;
                let pred = predict_keypoints(&model, &rec.clip_id, &clip.frames, &train_cfg.codec, filter.as_ref())?;
                Ok(evaluate_clip(pred.best(), &load_reference(manifest, rec)?)?)
            })
            .collect::<CliResult<Vec<_>>>()?;
        Some(aggregate(&clips))
    };
    Ok(TrainSummary {
        model_kind: "unet".into(),
        seed: cfg.seed,
        checkpoint,
        train_clips: ids(manifest, train_idx),
        val_clips: ids(manifest, val_idx),
        final_train_loss: report.epochs.last().map(|e| e.train_loss),
        final_val_loss: report.epochs.last().and_then(|e| e.val_loss),
        val_metrics,
        val_loss_zero_audio: None,
        seconds: 0.0,
        unet_report: Some(report),
        fusion_report: None,
    })
}

/// Builds fusion samples: frozen U-Net keypoints, aligned audio features,
/// reference trajectory and the audio's pitch contour.
pub fn fusion_samples(
    unet: &UNet,
    manifest: &Manifest,
    idx: &[usize],
    audio: AudioSource,
    smooth_sigma: f64,
) -> CliResult<Vec<FusionSample>> {
    let filter = filter_for(smooth_sigma)?;
    idx.par_iter()
        .map(|&i| {
            let rec = &manifest.clips[i];
            let clip = load_clip(manifest, rec)?;
            let t = clip.frames.len();
            Ok(FusionSample {
                keypoints: unet_keypoints(unet, &rec.clip_id, &clip.frames, filter.as_ref())?,
                features: clip_features(audio, manifest, rec, &clip.audio, t)?,
                target: load_reference(manifest, rec)?,
                pitch: extract_pitch(&clip.audio, t),
            })
        })
        .collect()
}

fn run_fusion(cfg: &RunConfig, manifest: &Manifest, train_idx: &[usize], val_idx: &[usize]) -> CliResult<TrainSummary> {
    let unet_path = cfg
        .unet_checkpoint
        .as_ref()
        .ok_or_else(|| CliError::Usage("fusion training needs unet_checkpoint in the config".into()))?;
    let unet = load_unet(unet_path)?;
    let mut fusion_cfg = cfg.fusion.clone();
    fusion_cfg.seed = cfg.seed;
    let audio = if fusion_cfg.audio_dim == 0 { AudioSource::None } else { cfg.audio };
    if fusion_cfg.audio_dim > 0 && audio == AudioSource::None {
        return Err(CliError::Usage("audio_dim > 0 needs audio 'stub' or 'real'".into()));
    }
    let train_set = fusion_samples(&unet, manifest, train_idx, audio, cfg.smooth_sigma)?;
    let val_set = fusion_samples(&unet, manifest, val_idx, audio, cfg.smooth_sigma)?;
    if let Some(f) = train_set.iter().find_map(|s| s.features.as_ref()) {
        if f.dim() != fusion_cfg.audio_dim {
            return Err(CliError::Usage(format!(
                "audio features have {} dims but the config says audio_dim {}",
                f.dim(),
                fusion_cfg.audio_dim
            )));
        }
    }
    let mut train_cfg = cfg.fusion_train.clone();
    train_cfg.seed = cfg.seed;
    let checkpoint = cfg.run_dir.join(CHECKPOINT_FILE);
    train_cfg.checkpoint_path = Some(checkpoint.clone());
    let mut model = FusionModel::build(&fusion_cfg).usage("invalid fusion config")?;
    let report = train_fusion(&mut model, &train_set, &val_set, &train_cfg)?;
    let (val_metrics, zero_audio) = if val_set.is_empty() {
        (None, None)
    } else {
        let clips = val_set
            .iter()
            .map(|s| {
                let (traj, _) = model.predict(&s.keypoints, s.features.as_ref())?;
                Ok(evaluate_clip(&traj, &s.target)?)
            })
            .collect::<CliResult<Vec<_>>>()?;
        let zero = (fusion_cfg.audio_dim > 0)
            .then(|| evaluate_fusion(&model, &val_set, &train_cfg.loss, true))
            .transpose()?;
        (Some(aggregate(&clips)), zero)
    };
    Ok(TrainSummary {
        model_kind: "fusion".into(),
        seed: cfg.seed,
        checkpoint,
        train_clips: ids(manifest, train_idx),
        val_clips: ids(manifest, val_idx),
        final_train_loss: report.epochs.last().map(|e| e.train_loss),
        final_val_loss: report.epochs.last().and_then(|e| e.val_loss),
        val_metrics,
        val_loss_zero_audio: zero_audio,
        seconds: 0.0,
        unet_report: None,
        fusion_report: Some(report),
    })
}
