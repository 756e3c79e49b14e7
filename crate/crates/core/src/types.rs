//! Shared data model: frames, keypoints, trajectories, heatmaps, weights and
//! audio, plus pairing validation and frame padding.
//!
//! Coordinates are `(x, y)` = (column, row) in padded-frame pixel units with
//! pixel centers at integer positions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_POINTS: usize = 95;
pub const NUM_COORDS: usize = 2 * NUM_POINTS;
pub const NATIVE_SIZE: usize = 84;
pub const GRID: usize = 96;
pub const GRID_PIXELS: usize = GRID * GRID;
pub const PAD: usize = (GRID - NATIVE_SIZE) / 2;
pub const SAMPLE_RATE: u32 = 16_000;
pub const SAMPLES_PER_FRAME: usize = 192;
/// Video frame rate in Hz (16000 / 192 = 83.33…).
pub const FRAME_RATE: f64 = SAMPLE_RATE as f64 / SAMPLES_PER_FRAME as f64;

/// One grayscale frame with intensities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Shape(format!(
                "frame {height}×{width} needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invalid(format!("pixel intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Builds a frame from raw intensities with per-frame min-max scaling.
    /// A constant frame maps to all zeros.
    pub fn from_raw(height: usize, width: usize, raw: &[f32]) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("frame intensities"));
        }
        let lo = raw.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = raw.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let span = hi - lo;
        let pixels = raw
            .iter()
            .map(|v| if span > 0.0 { ((v - lo) / span).clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        Self::new(height, width, pixels)
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn is_native(&self) -> bool {
        self.height == NATIVE_SIZE && self.width == NATIVE_SIZE
    }

    pub fn is_padded(&self) -> bool {
        self.height == GRID && self.width == GRID
    }
}

/// Zero-pads a native 84×84 frame to 96×96 with a symmetric 6-pixel border.
/// Keypoints must be moved with [`shift_keypoints`] by `(+6, +6)`.
pub fn pad_frame(frame: &Frame) -> Result<Frame> {
    if !frame.is_native() {
        return Err(Error::Shape(format!(
            "pad_frame expects {NATIVE_SIZE}×{NATIVE_SIZE}, got {}×{}",
            frame.height, frame.width
        )));
    }
    let mut out = vec![0.0f32; GRID_PIXELS];
    for r in 0..NATIVE_SIZE {
        out[(r + PAD) * GRID + PAD..(r + PAD) * GRID + PAD + NATIVE_SIZE]
            .copy_from_slice(&frame.pixels[r * NATIVE_SIZE..(r + 1) * NATIVE_SIZE]);
    }
    Ok(Frame {
        height: GRID,
        width: GRID,
        pixels: out,
    })
}

/// Inverse of [`pad_frame`]: extracts the centered 84×84 region.
pub fn crop_frame(frame: &Frame) -> Result<Frame> {
    if !frame.is_padded() {
        return Err(Error::Shape(format!(
            "crop_frame expects {GRID}×{GRID}, got {}×{}",
            frame.height, frame.width
        )));
    }
    let mut out = Vec::with_capacity(NATIVE_SIZE * NATIVE_SIZE);
    for r in 0..NATIVE_SIZE {
        out.extend_from_slice(&frame.pixels[(r + PAD) * GRID + PAD..][..NATIVE_SIZE]);
    }
    Ok(Frame {
        height: NATIVE_SIZE,
        width: NATIVE_SIZE,
        pixels: out,
    })
}

/// The 95 articulator points of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct KeypointSet {
    points: Vec<[f32; 2]>,
}

impl KeypointSet {
    pub fn new(points: Vec<[f32; 2]>) -> Result<Self> {
        if points.len() != NUM_POINTS {
            return Err(Error::Shape(format!(
                "expected {NUM_POINTS} points, got {}",
                points.len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("keypoint coordinates"));
        }
        Ok(Self { points })
    }

    /// From interleaved `x0, y0, x1, y1, …`.
    pub fn from_flat(coords: &[f32]) -> Result<Self> {
        if coords.len() != NUM_COORDS {
            return Err(Error::Shape(format!(
                "expected {NUM_COORDS} coordinates, got {}",
                coords.len()
            )));
        }
        Self::new(coords.chunks_exact(2).map(|c| [c[0], c[1]]).collect())
    }

    pub fn points(&self) -> &[[f32; 2]] {
        &self.points
    }

    pub fn flat(&self) -> Vec<f32> {
        self.points.iter().flatten().copied().collect()
    }

    /// Indices of points outside `[0, 96)` on either axis.
    pub fn out_of_grid(&self) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| !in_grid(p[0]) || !in_grid(p[1]))
            .map(|(i, _)| i)
            .collect()
    }
}

fn in_grid(v: f32) -> bool {
    (0.0..GRID as f32).contains(&v)
}

pub fn shift_keypoints(points: &KeypointSet, dx: f32, dy: f32) -> KeypointSet {
    KeypointSet {
        points: points.points.iter().map(|p| [p[0] + dx, p[1] + dy]).collect(),
    }
}

/// Per-clip keypoint tracks, stored as a flat `[T, 95, 2]` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub clip_id: String,
    pub frame_rate: f64,
    coords: Vec<f32>,
}

impl Trajectory {
    pub fn from_flat(clip_id: impl Into<String>, frame_rate: f64, coords: Vec<f32>) -> Result<Self> {
        if coords.is_empty() || coords.len() % NUM_COORDS != 0 {
            return Err(Error::Shape(format!(
                "trajectory payload of {} values is not a positive multiple of {NUM_COORDS}",
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trajectory"));
        }
        if !(frame_rate > 0.0) {
            return Err(Error::Invalid(format!("frame rate {frame_rate} must be positive")));
        }
        Ok(Self {
            clip_id: clip_id.into(),
            frame_rate,
            coords,
        })
    }

    pub fn from_frames(clip_id: impl Into<String>, frames: &[KeypointSet]) -> Result<Self> {
        let coords = frames.iter().flat_map(|k| k.flat()).collect();
        Self::from_flat(clip_id, FRAME_RATE, coords)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / NUM_COORDS
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[f32] {
        &self.coords
    }

    pub fn coords_mut(&mut self) -> &mut [f32] {
        &mut self.coords
    }

    /// Interleaved coordinates of frame `t`.
    pub fn frame_coords(&self, t: usize) -> &[f32] {
        &self.coords[t * NUM_COORDS..(t + 1) * NUM_COORDS]
    }

    pub fn frame(&self, t: usize) -> KeypointSet {
        KeypointSet {
            points: self
                .frame_coords(t)
                .chunks_exact(2)
                .map(|c| [c[0], c[1]])
                .collect(),
        }
    }

    /// Time series of one coordinate dimension (`2·point + axis`).
    pub fn series(&self, dim: usize) -> Vec<f64> {
        (0..self.len())
            .map(|t| self.coords[t * NUM_COORDS + dim] as f64)
            .collect()
    }

    pub fn with_coords(&self, coords: Vec<f32>) -> Result<Self> {
        Self::from_flat(self.clip_id.clone(), self.frame_rate, coords)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapKind {
    Logits,
    Probabilities,
    GaussianTarget,
}

/// 95 score grids of 96×96 pixels, row-major per grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapStack {
    pub kind: HeatmapKind,
    data: Vec<f32>,
}

impl HeatmapStack {
    pub fn new(kind: HeatmapKind, data: Vec<f32>) -> Result<Self> {
        if data.len() != NUM_POINTS * GRID_PIXELS {
            return Err(Error::Shape(format!(
                "heatmap stack needs {} values, got {}",
                NUM_POINTS * GRID_PIXELS,
                data.len()
            )));
        }
        Ok(Self { kind, data })
    }

    pub fn zeros(kind: HeatmapKind) -> Self {
        Self {
            kind,
            data: vec![0.0; NUM_POINTS * GRID_PIXELS],
        }
    }

    pub fn grid(&self, point: usize) -> &[f32] {
        &self.data[point * GRID_PIXELS..(point + 1) * GRID_PIXELS]
    }

    pub fn grid_mut(&mut self, point: usize) -> &mut [f32] {
        &mut self.data[point * GRID_PIXELS..(point + 1) * GRID_PIXELS]
    }

    pub fn grids(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(GRID_PIXELS)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

/// Per-point loss weights: speech importance × movement standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArticulatorWeights {
    importance: Vec<f64>,
    movement_std: Vec<f64>,
    combined: Vec<f64>,
}

impl ArticulatorWeights {
    pub fn new(importance: Vec<f64>, movement_std: Vec<f64>) -> Result<Self> {
        if importance.len() != NUM_POINTS || movement_std.len() != NUM_POINTS {
            return Err(Error::Shape(format!(
                "articulator weights need {NUM_POINTS} entries each, got {} and {}",
                importance.len(),
                movement_std.len()
            )));
        }
        if importance
            .iter()
            .chain(&movement_std)
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(Error::Invalid("articulator weights must be finite and nonnegative".into()));
        }
        let combined: Vec<f64> = importance
            .iter()
            .zip(&movement_std)
            .map(|(a, b)| a * b)
            .collect();
        if !combined.iter().any(|w| *w > 0.0) {
            return Err(Error::Invalid("articulator weights are all zero".into()));
        }
        Ok(Self {
            importance,
            movement_std,
            combined,
        })
    }

    pub fn uniform() -> Self {
        Self::new(vec![1.0; NUM_POINTS], vec![1.0; NUM_POINTS]).expect("uniform weights are valid")
    }

    pub fn importance(&self) -> &[f64] {
        &self.importance
    }

    pub fn movement_std(&self) -> &[f64] {
        &self.movement_std
    }

    pub fn combined(&self) -> &[f64] {
        &self.combined
    }
}

/// Mono 16 kHz waveform with amplitudes in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f32>,
}

impl AudioClip {
    pub fn new(sample_rate: u32, samples: Vec<f32>) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::Invalid(format!(
                "sample rate must be {SAMPLE_RATE} Hz, got {sample_rate}"
            )));
        }
        if samples.iter().any(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::Invalid("audio samples must lie in [-1, 1]".into()));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        SAMPLE_RATE
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }
}

/// F0 per video frame in Hz; 0 marks unvoiced frames.
#[derive(Clone, Debug, PartialEq)]
pub struct PitchContour {
    f0: Vec<f32>,
}

/// Above this an F0 value is implausible for speech and flagged.
pub const PITCH_WARN_HZ: f32 = 500.0;

impl PitchContour {
    pub fn new(f0: Vec<f32>) -> Result<Self> {
        if f0.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid("pitch values must be finite and nonnegative".into()));
        }
        Ok(Self { f0 })
    }

    pub fn f0(&self) -> &[f32] {
        &self.f0
    }

    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    /// Frames whose F0 is at or above [`PITCH_WARN_HZ`].
    pub fn implausible_frames(&self) -> Vec<usize> {
        self.f0
            .iter()
            .enumerate()
            .filter(|(_, v)| **v >= PITCH_WARN_HZ)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    EmptyClip,
    LengthMismatch { frames: usize, expected_samples: usize, samples: usize },
    FrameSize { index: usize, height: usize, width: usize },
    MixedFrameSizes,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyClip => write!(f, "empty clip"),
            Violation::LengthMismatch {
                frames,
                expected_samples,
                samples,
            } => write!(
                f,
                "audio/video length mismatch: {frames} frames expect {expected_samples} ± {SAMPLES_PER_FRAME} samples, got {samples}"
            ),
            Violation::FrameSize {
                index,
                height,
                width,
            } => write!(f, "frame {index} is {height}×{width}, expected 84×84 or 96×96"),
            Violation::MixedFrameSizes => write!(f, "clip mixes native and padded frames"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that a clip's frames and audio belong together.
pub fn validate_pair(frames: &[Frame], audio: &AudioClip) -> ValidationReport {
    let mut violations = Vec::new();
    if frames.is_empty() {
        violations.push(Violation::EmptyClip);
        return ValidationReport { violations };
    }
    for (index, f) in frames.iter().enumerate() {
        if !f.is_native() && !f.is_padded() {
            violations.push(Violation::FrameSize {
                index,
                height: f.height(),
                width: f.width(),
            });
        }
    }
    if frames.iter().any(|f| f.is_native()) && frames.iter().any(|f| f.is_padded()) {
        violations.push(Violation::MixedFrameSizes);
    }
    let expected = SAMPLES_PER_FRAME * frames.len();
    if audio.samples().len().abs_diff(expected) > SAMPLES_PER_FRAME {
        violations.push(Violation::LengthMismatch {
            frames: frames.len(),
            expected_samples: expected,
            samples: audio.samples().len(),
        });
    }
    ValidationReport { violations }
}
