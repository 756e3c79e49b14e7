use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_all, write_atomic};
use crate::error::{Error, Result};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// One clip of a corpus. Paths are relative to the manifest's directory
/// unless absolute.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub frames_path: PathBuf,
    pub audio_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory_path: Option<PathBuf>,
    /// Precomputed speech-model features for this clip.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features_path: Option<PathBuf>,
    pub speaker_id: String,
    pub frames: usize,
    pub sample_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub corpus: String,
    pub clips: Vec<ClipRecord>,
    /// Directory the relative paths are resolved against; set on load.
    #[serde(skip)]
    pub root: PathBuf,
}

impl Manifest {
    pub fn new(corpus: impl Into<String>, root: impl Into<PathBuf>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            corpus: corpus.into(),
            clips: Vec::new(),
            root: root.into(),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Unique ids and the schema version; with `check_files`, every
    /// referenced file must exist.
    pub fn validate(&self, check_files: bool) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "manifest schema {} is not supported (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.clips {
            if !seen.insert(c.clip_id.as_str()) {
                return Err(Error::Invalid(format!("duplicate clip_id '{}'", c.clip_id)));
            }
            if !check_files {
                continue;
            }
            let paths = [Some(&c.frames_path), Some(&c.audio_path), c.trajectory_path.as_ref(), c.features_path.as_ref()];
            for p in paths.into_iter().flatten() {
                let full = self.resolve(p);
                if !full.exists() {
                    return Err(Error::Invalid(format!(
                        "clip '{}' references missing file {}",
                        c.clip_id,
                        full.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses and checks ids without touching the referenced files.
    pub fn read(path: &Path) -> Result<Self> {
        let mut m: Manifest = serde_json::from_slice(&read_all(path)?)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate(false)?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m = Self::read(path)?;
        m.validate(true)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate(false)?;
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }

    pub fn clip(&self, id: &str) -> Option<&ClipRecord> {
        self.clips.iter().find(|c| c.clip_id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: &str) -> ClipRecord {
        ClipRecord {
            clip_id: id.into(),
            frames_path: format!("{id}.vframes").into(),
            audio_path: format!("{id}.wav").into(),
            trajectory_path: None,
            features_path: None,
            speaker_id: "s1".into(),
            frames: 10,
            sample_count: 1920,
        }
    }

    #[test]
    fn duplicates_and_missing_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = Manifest::new("toy", dir.path());
        m.clips = vec![record("a"), record("a")];
        assert!(m.validate(false).is_err());
        m.clips.pop();
        assert!(m.validate(false).is_ok());
        assert!(m.validate(true).is_err());
        std::fs::write(dir.path().join("a.vframes"), b"").unwrap();
        std::fs::write(dir.path().join("a.wav"), b"").unwrap();
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert_eq!(Manifest::load(&path).unwrap().clips, m.clips);
    }
}
