//! `vocaltrack synth`: materialize a synthetic oracle corpus.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vocaltrack_core::io::{
    write_frame_stack, write_trajectory_file, write_wav_file, ClipRecord, Manifest, Provenance, FRAME_STACK_EXT,
    TRAJECTORY_EXT,
};
use vocaltrack_core::synth::{generate_synthetic_clip, SyntheticSpec};

use crate::error::{CliError, CliResult, Context};
use crate::pipeline::with_workers;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOG_FILE: &str = "synth_log.json";

/// Corpus description: clip `i` is generated from `clip` with seed
/// `base_seed + i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub corpus: String,
    pub clips: usize,
    pub base_seed: u64,
    /// Clips are assigned round-robin to this many speaker ids.
    pub speakers: usize,
    pub clip: SyntheticSpec,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            corpus: "synthetic".into(),
            clips: 5,
            base_seed: 0,
            speakers: 1,
            clip: SyntheticSpec::default(),
        }
    }
}

impl CorpusSpec {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).usage(&format!("cannot read corpus spec {}", path.display()))?;
        let spec: CorpusSpec = serde_json::from_str(&text).usage(&format!("invalid corpus spec {}", path.display()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.clips == 0 || self.speakers == 0 {
            return Err(CliError::Usage("corpus spec needs at least one clip and one speaker".into()));
        }
        self.clip.validate().usage("invalid clip spec")
    }

    pub fn clip_id(&self, i: usize) -> String {
        format!("{}_{i:04}", self.corpus)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileChecksum {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthSummary {
    pub manifest: PathBuf,
    pub clips: usize,
    pub checksums: Vec<FileChecksum>,
}

fn checksum(root: &Path, rel: &Path) -> CliResult<FileChecksum> {
    let bytes = std::fs::read(root.join(rel)).runtime(&format!("reading back {}", rel.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(FileChecksum {
        path: rel.to_path_buf(),
        sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

fn write_clip(spec: &CorpusSpec, i: usize, out_dir: &Path) -> CliResult<(ClipRecord, Vec<FileChecksum>)> {
    let id = spec.clip_id(i);
    let clip_spec = SyntheticSpec {
        seed: spec.base_seed + i as u64,
        ..spec.clip.clone()
    };
    let clip = generate_synthetic_clip(&clip_spec, &id)?;
    let frames_rel = PathBuf::from("frames").join(format!("{id}.{FRAME_STACK_EXT}"));
    let audio_rel = PathBuf::from("audio").join(format!("{id}.wav"));
    let traj_rel = PathBuf::from("labels").join(format!("{id}.{TRAJECTORY_EXT}"));
    write_frame_stack(&out_dir.join(&frames_rel), &clip.frames)?;
    write_wav_file(&out_dir.join(&audio_rel), &clip.audio)?;
    write_trajectory_file(&out_dir.join(&traj_rel), &clip.trajectory, Provenance::Synthetic)?;
    let sums = [&frames_rel, &audio_rel, &traj_rel]
        .into_iter()
        .map(|p| checksum(out_dir, p))
        .collect::<CliResult<Vec<_>>>()?;
    let record = ClipRecord {
        clip_id: id,
        frames_path: frames_rel,
        audio_path: audio_rel,
        trajectory_path: Some(traj_rel),
        features_path: None,
        speaker_id: format!("spk{}", i % spec.speakers),
        frames: clip.frames.len(),
        sample_count: clip.audio.samples().len(),
    };
    Ok((record, sums))
}

pub fn run(spec: &CorpusSpec, out_dir: &Path, workers: usize) -> CliResult<SynthSummary> {
    spec.validate()?;
    for sub in ["frames", "audio", "labels"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).usage(&format!("cannot create {}", d.display()))?;
    }
    let clips = with_workers(workers, || {
        (0..spec.clips)
            .into_par_iter()
            .map(|i| write_clip(spec, i, out_dir))
            .collect::<CliResult<Vec<_>>>()
    })??;
    let mut manifest = Manifest::new(spec.corpus.clone(), out_dir);
    let mut checksums = Vec::new();
    for (rec, sums) in clips {
        manifest.clips.push(rec);
        checksums.extend(sums);
    }
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;
    let summary = SynthSummary {
        manifest: manifest_path,
        clips: spec.clips,
        checksums,
    };
    let log = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    std::fs::write(out_dir.join(LOG_FILE), log).runtime("writing synth log")?;
    Ok(summary)
}
