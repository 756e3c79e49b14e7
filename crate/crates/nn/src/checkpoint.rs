//! Versioned binary container for model parameters.
//!
//! Layout: magic `VTCK`, `u32` format version, `u64` header length, a JSON
//! header, then the parameter payload as little-endian `f32` in header order.
//! The header echoes the model configuration so a checkpoint can be rebuilt
//! without the training config.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Module;

const MAGIC: &[u8; 4] = b"VTCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint is a `{found}` model, expected `{expected}`")]
    WrongKind { expected: String, found: String },
    #[error("parameter `{0}` missing from checkpoint")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {found:?}, model expects {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model_kind: String,
    config: serde_json::Value,
    #[serde(default)]
    metadata: serde_json::Value,
    params: Vec<ParamEntry>,
}

/// In-memory checkpoint: kind tag, config echo, free-form metadata and
/// named parameter arrays.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model_kind: String,
    pub config: serde_json::Value,
    pub metadata: serde_json::Value,
    params: Vec<(String, Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    pub fn from_module<M: Module + ?Sized>(
        model_kind: &str,
        config: serde_json::Value,
        model: &M,
    ) -> Self {
        let mut params = Vec::new();
        model.visit_params(&mut |p| params.push((p.name.clone(), p.shape.clone(), p.value.clone())));
        Self {
            model_kind: model_kind.to_string(),
            config,
            metadata: serde_json::Value::Null,
            params,
        }
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|(n, _, _)| n.as_str())
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.model_kind == kind {
            Ok(())
        } else {
            Err(CheckpointError::WrongKind {
                expected: kind.to_string(),
                found: self.model_kind.clone(),
            })
        }
    }

    /// Copies stored values into `model`, matching parameters by name.
    pub fn load_into<M: Module + ?Sized>(&self, model: &mut M) -> Result<(), CheckpointError> {
        let map: HashMap<&str, (&Vec<usize>, &Vec<f32>)> = self
            .params
            .iter()
            .map(|(n, s, v)| (n.as_str(), (s, v)))
            .collect();
        let mut err = None;
        model.visit_params_mut(&mut |p| {
            if err.is_some() {
                return;
            }
            match map.get(p.name.as_str()) {
                None => err = Some(CheckpointError::MissingParam(p.name.clone())),
                Some((shape, _)) if **shape != p.shape => {
                    err = Some(CheckpointError::ShapeMismatch {
                        name: p.name.clone(),
                        expected: p.shape.clone(),
                        found: (*shape).clone(),
                    })
                }
                Some((_, values)) => p.value.copy_from_slice(values),
            }
        });
        err.map_or(Ok(()), Err)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        let header = Header {
            format_version: FORMAT_VERSION,
            model_kind: self.model_kind.clone(),
            config: self.config.clone(),
            metadata: self.metadata.clone(),
            params: self
                .params
                .iter()
                .map(|(name, shape, _)| ParamEntry {
                    name: name.clone(),
                    shape: shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        let mut buf = Vec::new();
        for (_, _, values) in &self.params {
            buf.clear();
            buf.reserve(values.len() * 4);
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let hlen = u64::from_le_bytes(b8) as usize;
        let mut hbytes = vec![0u8; hlen];
        r.read_exact(&mut hbytes)?;
        let header: Header = serde_json::from_slice(&hbytes)?;
        let mut payload = Vec::new();
        r.read_to_end(&mut payload)?;
        let expected: usize = header
            .params
            .iter()
            .map(|p| p.shape.iter().product::<usize>() * 4)
            .sum();
        if payload.len() != expected {
            return Err(CheckpointError::Truncated {
                expected,
                found: payload.len(),
            });
        }
        let mut offset = 0;
        let mut params = Vec::with_capacity(header.params.len());
        for entry in header.params {
            let n: usize = entry.shape.iter().product();
            let values = payload[offset..offset + 4 * n]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            offset += 4 * n;
            params.push((entry.name, entry.shape, values));
        }
        Ok(Self {
            model_kind: header.model_kind,
            config: header.config,
            metadata: header.metadata,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Param;

    #[test]
    fn round_trip_preserves_values_and_config() {
        let mut a = vec![Param::filled("a", &[2, 3], 1.5), Param::filled("b", &[4], -2.0)];
        a[1].value[2] = f32::MIN_POSITIVE;
        let ck = Checkpoint::from_module("toy", serde_json::json!({"depth": 3}), &a);
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(&bytes[..]).unwrap();
        assert_eq!(back.model_kind, "toy");
        assert_eq!(back.config["depth"], 3);
        let mut b = vec![Param::zeros("a", &[2, 3]), Param::zeros("b", &[4])];
        back.load_into(&mut b).unwrap();
        assert_eq!(a[0].value, b[0].value);
        assert_eq!(a[1].value, b[1].value);
    }

    #[test]
    fn rejects_wrong_shape_and_truncation() {
        let a = vec![Param::filled("a", &[2], 1.0)];
        let ck = Checkpoint::from_module("toy", serde_json::Value::Null, &a);
        let mut b = vec![Param::zeros("a", &[3])];
        assert!(matches!(
            ck.load_into(&mut b),
            Err(CheckpointError::ShapeMismatch { .. })
        ));
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        bytes.pop();
        assert!(matches!(
            Checkpoint::read_from(&bytes[..]),
            Err(CheckpointError::Truncated { .. })
        ));
        assert!(matches!(
            Checkpoint::read_from(&b"XXXX"[..]),
            Err(CheckpointError::BadMagic)
        ));
    }
}
