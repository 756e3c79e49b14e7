//! `vocaltrack label`: write one trajectory file per manifest clip.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use vocaltrack_core::io::{write_trajectory_file, ClipRecord, Manifest, Provenance, TRAJECTORY_EXT};
use vocaltrack_core::types::Trajectory;

use crate::config::AudioSource;
use crate::error::{CliError, CliResult, Context};
use crate::pipeline::{clip_features, filter_for, load_clip, load_model, load_unet, unet_keypoints, with_workers, LoadedModel};

pub const LOG_FILE: &str = "label_log.json";

pub struct LabelOptions {
    pub checkpoint: PathBuf,
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    /// 0 disables smoothing.
    pub smooth_sigma: f64,
    pub audio: AudioSource,
    /// Upstream U-Net for fusion checkpoints.
    pub unet: Option<PathBuf>,
    pub workers: usize,
}

#[derive(Debug, Serialize)]
pub struct ClipOutcome {
    pub clip_id: String,
    pub frames: usize,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct LabelSummary {
    pub provenance: Provenance,
    pub clips: Vec<ClipOutcome>,
    pub frames: usize,
    pub seconds: f64,
    pub frames_per_second: f64,
}

impl LabelSummary {
    pub fn failures(&self) -> impl Iterator<Item = &ClipOutcome> {
        self.clips.iter().filter(|c| c.error.is_some())
    }
}

pub fn trajectory_path(out_dir: &Path, clip_id: &str) -> PathBuf {
    out_dir.join(format!("{clip_id}.{TRAJECTORY_EXT}"))
}

enum Labeler {
    Unet(vocaltrack_core::unet::UNet),
    Fusion {
        unet: vocaltrack_core::unet::UNet,
        fusion: vocaltrack_core::fusion::FusionModel,
    },
}

fn label_clip(
    labeler: &Labeler,
    manifest: &Manifest,
    rec: &ClipRecord,
    opts: &LabelOptions,
) -> CliResult<(Trajectory, usize)> {
    let filter = filter_for(opts.smooth_sigma)?;
    let clip = load_clip(manifest, rec)?;
    let t = clip.frames.len();
    let traj = match labeler {
        Labeler::Unet(unet) => unet_keypoints(unet, &rec.clip_id, &clip.frames, filter.as_ref())?,
        Labeler::Fusion { unet, fusion } => {
            let kp = unet_keypoints(unet, &rec.clip_id, &clip.frames, filter.as_ref())?;
            let feats = clip_features(opts.audio, manifest, rec, &clip.audio, t)?;
            fusion.predict(&kp, feats.as_ref())?.0
        }
    };
    Ok((traj, t))
}

pub fn run(opts: &LabelOptions) -> CliResult<LabelSummary> {
    filter_for(opts.smooth_sigma)?;
    let (labeler, provenance) = match load_model(&opts.checkpoint)? {
        LoadedModel::Unet(m) => {
            if opts.audio != AudioSource::None {
                return Err(CliError::Usage("a U-Net checkpoint takes no audio; use --audio none".into()));
            }
            let p = if opts.smooth_sigma > 0.0 { Provenance::UnetSmoothed } else { Provenance::Unet };
            (Labeler::Unet(m), p)
        }
        LoadedModel::Fusion(fusion) => {
            let wants_audio = fusion.config().audio_dim > 0;
            if wants_audio == (opts.audio == AudioSource::None) {
                return Err(CliError::Usage(if wants_audio {
                    "this fusion checkpoint needs --audio stub or --audio real".into()
                } else {
                    "this keypoint-only fusion checkpoint takes --audio none".into()
                }));
            }
            let unet_path = opts
                .unet
                .as_ref()
                .ok_or_else(|| CliError::Usage("fusion labeling needs --unet <checkpoint>".into()))?;
            let unet = load_unet(unet_path)?;
            (Labeler::Fusion { unet, fusion }, Provenance::Fusion)
        }
    };
    // Missing clip files become per-clip errors rather than aborting the run.
    let manifest = Manifest::read(&opts.manifest)?;
    std::fs::create_dir_all(&opts.out_dir).usage(&format!("cannot create {}", opts.out_dir.display()))?;
    let start = Instant::now();
    let clips: Vec<ClipOutcome> = with_workers(opts.workers, || {
        manifest
            .clips
            .par_iter()
            .map(|rec| {
                let t0 = Instant::now();
                let result = label_clip(&labeler, &manifest, rec, opts).and_then(|(traj, t)| {
                    let path = trajectory_path(&opts.out_dir, &rec.clip_id);
                    write_trajectory_file(&path, &traj, provenance)?;
                    Ok((path, t))
                });
                let (output, frames, error) = match result {
                    Ok((p, t)) => (Some(p), t, None),
                    Err(e) => (None, 0, Some(e.to_string())),
                };
                ClipOutcome {
                    clip_id: rec.clip_id.clone(),
                    frames,
                    seconds: t0.elapsed().as_secs_f64(),
                    output,
                    error,
                }
            })
            .collect()
    })?;
    let seconds = start.elapsed().as_secs_f64();
    let frames = clips.iter().map(|c| c.frames).sum();
    let summary = LabelSummary {
        provenance,
        clips,
        frames,
        seconds,
        frames_per_second: frames as f64 / seconds.max(1e-9),
    };
    let log = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(opts.out_dir.join(LOG_FILE), log + "\n").runtime("writing label log")?;
    Ok(summary)
}
