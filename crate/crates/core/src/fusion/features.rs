//! Audio feature extraction and alignment to the video frame rate.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{AudioClip, FRAME_RATE, SAMPLE_RATE};

/// Frame rate of the speech-model features (20 ms hop).
pub const FEATURE_RATE: f64 = 50.0;
pub const FEATURE_HOP: usize = 320;
pub const FEATURE_WINDOW: usize = 400;

/// `N × D` feature vectors sampled at `rate`, the first one centered at
/// `offset_secs`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    pub rate: f64,
    pub offset_secs: f64,
    dim: usize,
    data: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(rate: f64, offset_secs: f64, dim: usize, data: Vec<f32>) -> Result<Self> {
        if !(rate > 0.0) || !offset_secs.is_finite() {
            return Err(Error::Invalid(format!("bad feature timing: rate {rate}, offset {offset_secs}")));
        }
        if dim == 0 && !data.is_empty() || dim > 0 && data.len() % dim != 0 {
            return Err(Error::Shape(format!("{} values do not form rows of {dim}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("audio features"));
        }
        Ok(Self {
            rate,
            offset_secs,
            dim,
            data,
        })
    }

    /// `frames` zero vectors on the video clock.
    pub fn zeros(frames: usize, dim: usize) -> Self {
        Self {
            rate: FRAME_RATE,
            offset_secs: 0.5 / FRAME_RATE,
            dim,
            data: vec![0.0; frames * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }
}

/// Source of per-frame speech embeddings at [`FEATURE_RATE`].
pub trait FeatureExtractor: Send + Sync {
    fn dim(&self) -> usize;
    fn extract(&self, audio: &AudioClip) -> Result<FeatureSequence>;
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Deterministic stand-in for the speech model: log mel-band energies of
/// Hann-windowed 25 ms frames hopped every 20 ms.
pub struct MelStub {
    bands: usize,
    fft_size: usize,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// Per band, `(first_bin, weights)`.
    filters: Vec<(usize, Vec<f64>)>,
}

impl std::fmt::Debug for MelStub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelStub").field("bands", &self.bands).finish()
    }
}

impl MelStub {
    pub const DEFAULT_BANDS: usize = 40;

    pub fn new(bands: usize) -> Result<Self> {
        if bands == 0 {
            return Err(Error::Invalid("mel stub needs at least one band".into()));
        }
        let fft_size = 1024;
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        let window = (0..FEATURE_WINDOW)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / FEATURE_WINDOW as f64).cos())
            .collect();
        let (lo, hi) = (hz_to_mel(50.0), hz_to_mel(SAMPLE_RATE as f64 / 2.0));
        let edges: Vec<f64> = (0..bands + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (bands + 1) as f64))
            .collect();
        let bin_hz = SAMPLE_RATE as f64 / fft_size as f64;
        let filters = (0..bands)
            .map(|b| {
                let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
                let first = (l / bin_hz).floor() as usize;
                let last = ((r / bin_hz).ceil() as usize).min(fft_size / 2);
                let weights = (first..=last)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= l || f >= r {
                            0.0
                        } else if f <= c {
                            (f - l) / (c - l)
                        } else {
                            (r - f) / (r - c)
                        }
                    })
                    .collect();
                (first, weights)
            })
            .collect();
        Ok(Self {
            bands,
            fft_size,
            fft,
            window,
            filters,
        })
    }
}

impl Default for MelStub {
    fn default() -> Self {
        Self::new(Self::DEFAULT_BANDS).expect("default band count is valid")
    }
}

impl FeatureExtractor for MelStub {
    fn dim(&self) -> usize {
        self.bands
    }

    fn extract(&self, audio: &AudioClip) -> Result<FeatureSequence> {
        let x = audio.samples();
        let frames = if x.len() >= FEATURE_WINDOW {
            1 + (x.len() - FEATURE_WINDOW) / FEATURE_HOP
        } else {
            1
        };
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        let mut out = Vec::with_capacity(frames * self.bands);
        for i in 0..frames {
            let start = i * FEATURE_HOP;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (n, w) in self.window.iter().enumerate() {
                let s = x.get(start + n).copied().unwrap_or(0.0) as f64;
                buf[n] = Complex::new(s * w, 0.0);
            }
            self.fft.process(&mut buf);
            for (first, weights) in &self.filters {
                let e: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * buf[first + j].norm_sqr())
                    .sum();
                out.push((e + 1e-6).ln() as f32);
            }
        }
        FeatureSequence::new(
            FEATURE_RATE,
            FEATURE_WINDOW as f64 / 2.0 / SAMPLE_RATE as f64,
            self.bands,
            out,
        )
    }
}

/// Resamples features onto the video clock by linear interpolation between
/// neighbouring vectors; times outside the source span take the nearest
/// endpoint. Video frame `i` is centered at `(i + 0.5) / FRAME_RATE`.
pub fn align_features(f: &FeatureSequence, frames: usize) -> Result<FeatureSequence> {
    let n = f.len();
    if n == 0 || (n < 2 && frames > 1) {
        return Err(Error::Invalid(format!(
            "cannot align {n} feature vectors to {frames} frames"
        )));
    }
    let d = f.dim();
    let mut out = Vec::with_capacity(frames * d);
    for i in 0..frames {
        let t = (i as f64 + 0.5) / FRAME_RATE;
        let pos = ((t - f.offset_secs) * f.rate).clamp(0.0, (n - 1) as f64);
        let j = (pos.floor() as usize).min(n.saturating_sub(2));
        let w = pos - j as f64;
        if n == 1 {
            out.extend_from_slice(f.row(0));
            continue;
        }
        let (a, b) = (f.row(j), f.row(j + 1));
        out.extend(a.iter().zip(b).map(|(x, y)| (*x as f64 * (1.0 - w) + *y as f64 * w) as f32));
    }
    FeatureSequence::new(FRAME_RATE, 0.5 / FRAME_RATE, d, out)
}

const FEATURE_MAGIC: &[u8; 4] = b"VTFE";

#[derive(Serialize, Deserialize)]
struct FeatureHeader {
    rate: f64,
    offset_secs: f64,
    dim: usize,
    frames: usize,
}

/// Writes features in the container read by [`read_feature_file`]: magic,
/// u64 LE header length, JSON header, then `frames × dim` f32 LE values.
pub fn write_features<W: Write>(f: &FeatureSequence, mut w: W) -> Result<()> {
    let header = serde_json::to_vec(&FeatureHeader {
        rate: f.rate,
        offset_secs: f.offset_secs,
        dim: f.dim,
        frames: f.len(),
    })?;
    let mut bytes = Vec::with_capacity(12 + header.len() + 4 * f.data.len());
    bytes.extend_from_slice(FEATURE_MAGIC);
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    for v in &f.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes).map_err(|e| Error::Format(format!("writing features: {e}")))
}

pub fn read_features<R: Read>(mut r: R) -> Result<FeatureSequence> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("reading features: {e}")))?;
    if bytes.len() < 12 || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::Format("not a feature file".into()));
    }
    let hlen = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(12..)
        .filter(|b| b.len() >= hlen)
        .ok_or_else(|| Error::Format("truncated feature header".into()))?;
    let header: FeatureHeader = serde_json::from_slice(&body[..hlen])?;
    let payload = &body[hlen..];
    if payload.len() != 4 * header.frames * header.dim {
        return Err(Error::Format(format!(
            "feature payload has {} bytes, header implies {}",
            payload.len(),
            4 * header.frames * header.dim
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    FeatureSequence::new(header.rate, header.offset_secs, header.dim, data)
}

pub fn read_feature_file(path: &Path) -> Result<FeatureSequence> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_features(std::io::BufReader::new(file))
}

pub fn write_feature_file(f: &FeatureSequence, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_features(f, std::io::BufWriter::new(file))
}
