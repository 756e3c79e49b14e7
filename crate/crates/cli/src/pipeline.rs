//! Per-clip building blocks shared by the commands.

use std::path::Path;

use vocaltrack_core::codec::CodecConfig;
use vocaltrack_core::filter::{smooth, FilterConfig};
use vocaltrack_core::fusion::features::read_feature_file;
use vocaltrack_core::fusion::{align_features, FeatureExtractor, FeatureSequence, FusionModel, MelStub};
use vocaltrack_core::io::{load_frames, read_trajectory_file, read_wav_file, ClipRecord, Manifest};
use vocaltrack_core::types::{validate_pair, AudioClip, Frame, Trajectory};
use vocaltrack_core::unet::{predict_keypoints, UNet};
use vocaltrack_nn::Checkpoint;

use crate::config::AudioSource;
use crate::error::{CliError, CliResult, Context};

pub struct ClipData {
    pub record: ClipRecord,
    pub frames: Vec<Frame>,
    pub audio: AudioClip,
}

pub fn load_clip(manifest: &Manifest, record: &ClipRecord) -> CliResult<ClipData> {
    let frames = load_frames(&manifest.resolve(&record.frames_path))?;
    let audio = read_wav_file(&manifest.resolve(&record.audio_path))?;
    let report = validate_pair(&frames, &audio);
    if !report.is_valid() {
        let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(CliError::Runtime(format!("clip '{}': {}", record.clip_id, msgs.join("; "))));
    }
    Ok(ClipData {
        record: record.clone(),
        frames,
        audio,
    })
}

pub fn load_reference(manifest: &Manifest, record: &ClipRecord) -> CliResult<Trajectory> {
    let path = record
        .trajectory_path
        .as_ref()
        .ok_or_else(|| CliError::Runtime(format!("clip '{}' has no reference trajectory", record.clip_id)))?;
    let (mut traj, _) = read_trajectory_file(&manifest.resolve(path))?;
    traj.clip_id = record.clip_id.clone();
    Ok(traj)
}

/// `sigma = 0` disables the temporal filter.
pub fn filter_for(sigma: f64) -> CliResult<Option<FilterConfig>> {
    if sigma == 0.0 {
        return Ok(None);
    }
    FilterConfig::new(sigma).map(Some).usage("invalid smoothing sigma")
}

/// U-Net keypoints for a clip; the smoothed track when a filter is given.
pub fn unet_keypoints(model: &UNet, clip_id: &str, frames: &[Frame], filter: Option<&FilterConfig>) -> CliResult<Trajectory> {
    let p = predict_keypoints(model, clip_id, frames, &CodecConfig::default(), None)?;
    Ok(match filter {
        Some(f) => smooth(&p.raw, f),
        None => p.raw,
    })
}

/// Audio features aligned to the clip's `frames` video frames.
pub fn clip_features(
    source: AudioSource,
    manifest: &Manifest,
    record: &ClipRecord,
    audio: &AudioClip,
    frames: usize,
) -> CliResult<Option<FeatureSequence>> {
    let raw = match source {
        AudioSource::None => return Ok(None),
        AudioSource::Stub => MelStub::default().extract(audio)?,
        AudioSource::Real => {
            let path = record.features_path.as_ref().ok_or_else(|| {
                CliError::Runtime(format!(
                    "clip '{}' has no features_path; real audio features must be precomputed",
                    record.clip_id
                ))
            })?;
            read_feature_file(&manifest.resolve(path))?
        }
    };
    Ok(Some(align_features(&raw, frames)?))
}

pub enum LoadedModel {
    Unet(UNet),
    Fusion(FusionModel),
}

pub fn load_model(path: &Path) -> CliResult<LoadedModel> {
    let ck = Checkpoint::load(path).runtime(&format!("cannot load checkpoint {}", path.display()))?;
    match ck.model_kind.as_str() {
        vocaltrack_core::unet::MODEL_KIND => Ok(LoadedModel::Unet(UNet::from_checkpoint(&ck)?)),
        vocaltrack_core::fusion::model::MODEL_KIND => Ok(LoadedModel::Fusion(FusionModel::from_checkpoint(&ck)?)),
        other => Err(CliError::Usage(format!("checkpoint {} has unknown model kind '{other}'", path.display()))),
    }
}

pub fn load_unet(path: &Path) -> CliResult<UNet> {
    match load_model(path)? {
        LoadedModel::Unet(m) => Ok(m),
        LoadedModel::Fusion(_) => Err(CliError::Usage(format!("{} is a fusion checkpoint, expected a U-Net", path.display()))),
    }
}

/// Runs `f` inside a pool of `workers` threads (0 = all cores).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .usage("cannot start worker pool")?;
    Ok(pool.install(f))
}
