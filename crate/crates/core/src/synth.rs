//! Synthetic oracle clips: articulator-like point chains rendered over a
//! textured background, paired with a tone whose pitch and loudness follow
//! the motion. Ground truth is known by construction.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    pad_frame, AudioClip, Frame, KeypointSet, PitchContour, Trajectory, FRAME_RATE, NATIVE_SIZE,
    NUM_POINTS, PAD, SAMPLES_PER_FRAME, SAMPLE_RATE,
};

/// Which chain drives the audio and how.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioCoupling {
    /// Point whose vertical position sets F0.
    pub pitch_point: usize,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// Chain whose primary motion sets loudness.
    pub amplitude_chain: usize,
    pub harmonics: usize,
    pub noise_level: f64,
}

impl Default for AudioCoupling {
    fn default() -> Self {
        Self {
            pitch_point: 2 * 19 + 9,
            f0_min_hz: 110.0,
            f0_max_hz: 230.0,
            amplitude_chain: 3,
            harmonics: 6,
            noise_level: 0.003,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub frames: usize,
    /// Chains the 95 points are split into, each a spline with its own
    /// motion; must divide 95.
    pub chains: usize,
    /// Highest frequency present in the motion signals.
    pub motion_bandwidth_hz: f64,
    /// Peak displacement normal to a chain, in pixels.
    pub motion_amplitude_px: f64,
    pub blob_sigma_px: f64,
    pub noise_std: f64,
    pub coupling: AudioCoupling,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 166,
            chains: 5,
            motion_bandwidth_hz: 2.0,
            motion_amplitude_px: 3.5,
            blob_sigma_px: 1.0,
            noise_std: 0.02,
            coupling: AudioCoupling::default(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Invalid("synthetic clip needs at least one frame".into()));
        }
        if self.chains == 0 || NUM_POINTS % self.chains != 0 {
            return Err(Error::Invalid(format!("{} chains do not divide {NUM_POINTS} points", self.chains)));
        }
        if !(self.motion_bandwidth_hz > 0.0 && self.motion_bandwidth_hz < FRAME_RATE / 2.0) {
            return Err(Error::Invalid("motion bandwidth must lie in (0, Nyquist)".into()));
        }
        if !(0.0..=6.0).contains(&self.motion_amplitude_px) {
            return Err(Error::Invalid("motion amplitude must lie in [0, 6] px".into()));
        }
        if !(self.blob_sigma_px > 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::Invalid("blob sigma must be positive and noise nonnegative".into()));
        }
        let c = &self.coupling;
        if c.pitch_point >= NUM_POINTS || c.amplitude_chain >= self.chains {
            return Err(Error::Invalid("audio coupling refers to a missing point or chain".into()));
        }
        if !(50.0 <= c.f0_min_hz && c.f0_min_hz < c.f0_max_hz && c.f0_max_hz <= 400.0) {
            return Err(Error::Invalid("F0 range must lie inside [50, 400] Hz".into()));
        }
        if c.harmonics == 0 {
            return Err(Error::Invalid("at least one harmonic is required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticClip {
    /// Padded 96×96 frames.
    pub frames: Vec<Frame>,
    /// Ground truth in padded coordinates.
    pub trajectory: Trajectory,
    pub audio: AudioClip,
    /// F0 used to synthesize the audio, per video frame.
    pub pitch: PitchContour,
}

/// Smooth zero-mean signal in [-1, 1] built from a few sinusoids below the
/// bandwidth.
fn latent_signal(rng: &mut ChaCha8Rng, frames: usize, bandwidth: f64) -> Vec<f64> {
    let parts: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let f = rng.random_range(0.15 * bandwidth..bandwidth);
            (f, rng.random_range(0.0..2.0 * PI), rng.random_range(0.4..1.0))
        })
        .collect();
    let total: f64 = parts.iter().map(|p| p.2).sum();
    (0..frames)
        .map(|t| {
            let time = t as f64 / FRAME_RATE;
            parts.iter().map(|(f, ph, a)| a * (2.0 * PI * f * time + ph).sin()).sum::<f64>() / total
        })
        .collect()
}

struct ChainGeometry {
    base: Vec<(f64, f64)>,
    normal_gain: Vec<f64>,
    brightness: f64,
}

/// Largest static distance of a point from its chain's nominal row: row
/// jitter, the chain's wave and the per-clip offset.
const STATIC_EXCURSION_PX: f64 = ROW_JITTER_PX + 3.0 + CLIP_OFFSET_PX;
const ROW_JITTER_PX: f64 = 1.5;
const CLIP_OFFSET_PX: f64 = 2.0;

fn nominal_row(chain: usize, chains: usize) -> f64 {
    NATIVE_SIZE as f64 * (chain as f64 + 1.0) / (chains as f64 + 1.0)
}

fn chain_geometry(rng: &mut ChaCha8Rng, chain: usize, chains: usize, per_chain: usize) -> ChainGeometry {
    let span = NATIVE_SIZE as f64;
    let row = nominal_row(chain, chains) + rng.random_range(-ROW_JITTER_PX..ROW_JITTER_PX);
    let x0 = 10.0 + rng.random_range(-1.5..1.5);
    let x1 = span - 10.0 + rng.random_range(-1.5..1.5);
    let wave = rng.random_range(1.5..3.0);
    let phase = chain as f64 + rng.random_range(-0.3..0.3);
    let base = (0..per_chain)
        .map(|j| {
            let u = j as f64 / (per_chain - 1).max(1) as f64;
            let x = x0 + (x1 - x0) * u;
            (x, row + wave * (2.0 * PI * u + phase).sin())
        })
        .collect();
    let normal_gain = (0..per_chain)
        .map(|j| 0.3 + 0.7 * (PI * (j as f64 + 1.0) / (per_chain as f64 + 1.0)).sin())
        .collect();
    ChainGeometry {
        base,
        normal_gain,
        brightness: rng.random_range(0.55..1.0),
    }
}

/// Native-resolution ground-truth coordinates, `[t][point]`.
fn simulate_points(rng: &mut ChaCha8Rng, spec: &SyntheticSpec) -> (Vec<Vec<[f64; 2]>>, Vec<ChainGeometry>, Vec<Vec<f64>>) {
    let per_chain = NUM_POINTS / spec.chains;
    let geometry: Vec<ChainGeometry> = (0..spec.chains)
        .map(|c| chain_geometry(rng, c, spec.chains, per_chain))
        .collect();
    let primary: Vec<Vec<f64>> = (0..spec.chains)
        .map(|_| latent_signal(rng, spec.frames, spec.motion_bandwidth_hz))
        .collect();
    let shift: Vec<Vec<f64>> = (0..spec.chains)
        .map(|_| latent_signal(rng, spec.frames, spec.motion_bandwidth_hz))
        .collect();
    let offset = [
        rng.random_range(-CLIP_OFFSET_PX..CLIP_OFFSET_PX),
        rng.random_range(-CLIP_OFFSET_PX..CLIP_OFFSET_PX),
    ];
    let lo = 1.0;
    let hi = NATIVE_SIZE as f64 - 2.0;
    let points = (0..spec.frames)
        .map(|t| {
            let mut frame = Vec::with_capacity(NUM_POINTS);
            for (c, g) in geometry.iter().enumerate() {
                for (j, &(bx, by)) in g.base.iter().enumerate() {
                    let dy = spec.motion_amplitude_px * g.normal_gain[j] * primary[c][t];
                    let dx = 0.4 * spec.motion_amplitude_px * shift[c][t];
                    let x = (bx + dx + offset[0]).clamp(lo, hi);
                    let y = (by + dy + offset[1]).clamp(lo, hi);
                    frame.push([x, y]);
                }
            }
            frame
        })
        .collect();
    (points, geometry, primary)
}

struct Texture {
    waves: Vec<(f64, f64, f64, f64)>,
    level: f64,
}

impl Texture {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let waves = (0..4)
            .map(|_| {
                let angle = rng.random_range(0.0..PI);
                let freq = rng.random_range(0.03..0.12);
                (freq * angle.cos(), freq * angle.sin(), rng.random_range(0.0..2.0 * PI), rng.random_range(0.03..0.08))
            })
            .collect();
        Self {
            waves,
            level: rng.random_range(0.15..0.3),
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.level
            + self
                .waves
                .iter()
                .map(|(kx, ky, ph, a)| a * (2.0 * PI * (kx * x + ky * y) + ph).cos())
                .sum::<f64>()
    }
}

/// Stamps a Gaussian spot, keeping the brighter of the existing and new
/// value so overlapping spots do not pile up.
fn stamp_max(canvas: &mut [f64], x: f64, y: f64, sigma: f64, peak: f64) {
    let n = NATIVE_SIZE as i64;
    let r = (3.0 * sigma).ceil() as i64;
    let (cx, cy) = (x.round() as i64, y.round() as i64);
    for row in (cy - r).max(0)..=(cy + r).min(n - 1) {
        for col in (cx - r).max(0)..=(cx + r).min(n - 1) {
            let d2 = (col as f64 - x).powi(2) + (row as f64 - y).powi(2);
            let v = peak * (-d2 / (2.0 * sigma * sigma)).exp();
            let px = &mut canvas[(row * n + col) as usize];
            *px = px.max(v);
        }
    }
}

fn catmull_rom(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64), p3: (f64, f64), u: f64) -> (f64, f64) {
    let f = |a: f64, b: f64, c: f64, d: f64| {
        0.5 * (2.0 * b + (c - a) * u + (2.0 * a - 5.0 * b + 4.0 * c - d) * u * u + (3.0 * b - a - 3.0 * c + d) * u * u * u)
    };
    (f(p0.0, p1.0, p2.0, p3.0), f(p0.1, p1.1, p2.1, p3.1))
}

fn render_frame(
    points: &[[f64; 2]],
    geometry: &[ChainGeometry],
    texture: &Texture,
    spec: &SyntheticSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Frame> {
    let n = NATIVE_SIZE;
    let mut lines = vec![0.0f64; n * n];
    let mut blobs = vec![0.0f64; n * n];
    let per_chain = NUM_POINTS / spec.chains;
    for (c, g) in geometry.iter().enumerate() {
        let pts: Vec<(f64, f64)> = points[c * per_chain..(c + 1) * per_chain]
            .iter()
            .map(|p| (p[0], p[1]))
            .collect();
        for i in 0..pts.len().saturating_sub(1) {
            let p0 = pts[i.saturating_sub(1)];
            let p3 = pts[(i + 2).min(pts.len() - 1)];
            for s in 0..6 {
                let (x, y) = catmull_rom(p0, pts[i], pts[i + 1], p3, s as f64 / 6.0);
                stamp_max(&mut lines, x, y, 0.8, 0.45 * g.brightness);
            }
        }
        for &(x, y) in &pts {
            stamp_max(&mut blobs, x, y, spec.blob_sigma_px, 0.55 * g.brightness);
        }
    }
    let mut raw = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            let i = row * n + col;
            let noise: f64 = if spec.noise_std > 0.0 {
                spec.noise_std * rng.sample::<f64, _>(rand_distr::StandardNormal)
            } else {
                0.0
            };
            raw.push((texture.at(col as f64, row as f64) + lines[i] + blobs[i] + noise) as f32);
        }
    }
    pad_frame(&Frame::from_raw(n, n, &raw)?)
}

fn synthesize_audio(
    pitch_y: &[f64],
    reference_y: f64,
    loudness: &[f64],
    spec: &SyntheticSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(AudioClip, PitchContour)> {
    let c = &spec.coupling;
    let mid = 0.5 * (c.f0_min_hz + c.f0_max_hz);
    let half = 0.5 * (c.f0_max_hz - c.f0_min_hz);
    // F0 follows the absolute row, so the audio also carries the clip's
    // static placement. The gain maps the widest possible excursion from the
    // chain's nominal row onto the F0 range; higher rows raise the pitch.
    let gain = half / (spec.motion_amplitude_px + STATIC_EXCURSION_PX);
    let f0: Vec<f64> = pitch_y
        .iter()
        .map(|y| (mid - gain * (y - reference_y)).clamp(c.f0_min_hz, c.f0_max_hz))
        .collect();
    let total = f0.len() * SAMPLES_PER_FRAME;
    let norm: f64 = (1..=c.harmonics).map(|h| 1.0 / h as f64).sum();
    let mut phase = 0.0f64;
    let mut samples = Vec::with_capacity(total);
    for n in 0..total {
        // Per-frame values sit at frame centers; interpolate between them.
        let pos = (n as f64 + 0.5) / SAMPLES_PER_FRAME as f64 - 0.5;
        let i = pos.floor().clamp(0.0, (f0.len() - 1) as f64) as usize;
        let j = (i + 1).min(f0.len() - 1);
        let w = (pos - i as f64).clamp(0.0, 1.0);
        let freq = f0[i] * (1.0 - w) + f0[j] * w;
        let amp = 0.15 + 0.35 * (0.5 + 0.5 * (loudness[i] * (1.0 - w) + loudness[j] * w));
        phase += 2.0 * PI * freq / SAMPLE_RATE as f64;
        if phase > 2.0 * PI {
            phase -= 2.0 * PI;
        }
        let tone: f64 = (1..=c.harmonics).map(|h| (h as f64 * phase).sin() / h as f64).sum::<f64>() / norm;
        let noise = c.noise_level * rng.sample::<f64, _>(rand_distr::StandardNormal);
        samples.push((amp * tone + noise).clamp(-1.0, 1.0) as f32);
    }
    let contour = PitchContour::new(f0.iter().map(|v| *v as f32).collect())?;
    Ok((AudioClip::new(SAMPLE_RATE, samples)?, contour))
}

/// Deterministic in `spec.seed`: the same spec always yields bit-identical
/// frames, trajectory and audio.
pub fn generate_synthetic_clip(spec: &SyntheticSpec, clip_id: &str) -> Result<SyntheticClip> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (native, geometry, primary) = simulate_points(&mut rng, spec);
    let texture = Texture::new(&mut rng);
    let mut frames = Vec::with_capacity(spec.frames);
    for pts in &native {
        frames.push(render_frame(pts, &geometry, &texture, spec, &mut rng)?);
    }
    let pitch_y: Vec<f64> = native.iter().map(|p| p[spec.coupling.pitch_point][1]).collect();
    let chain = spec.coupling.pitch_point / (NUM_POINTS / spec.chains);
    let (audio, pitch) = synthesize_audio(
        &pitch_y,
        nominal_row(chain, spec.chains),
        &primary[spec.coupling.amplitude_chain],
        spec,
        &mut rng,
    )?;
    let pad = PAD as f64;
    let keypoints = native
        .iter()
        .map(|pts| KeypointSet::new(pts.iter().map(|p| [(p[0] + pad) as f32, (p[1] + pad) as f32]).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticClip {
        frames,
        trajectory: Trajectory::from_frames(clip_id, &keypoints)?,
        audio,
        pitch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::pearson;
    use crate::types::{validate_pair, GRID};

    fn short(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            seed,
            frames: 40,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_synthetic_clip(&short(3), "a").unwrap();
        let b = generate_synthetic_clip(&short(3), "a").unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.audio.samples(), b.audio.samples());
        let c = generate_synthetic_clip(&short(4), "a").unwrap();
        assert_ne!(a.trajectory, c.trajectory);
    }

    #[test]
    fn points_stay_clear_of_the_border() {
        for seed in 0..5 {
            let clip = generate_synthetic_clip(&short(seed), "c").unwrap();
            for v in clip.trajectory.coords() {
                assert!(*v >= 6.0 && *v <= (GRID - 7) as f32, "{v}");
            }
        }
    }

    #[test]
    fn clips_pass_pair_validation() {
        let clip = generate_synthetic_clip(&short(1), "c").unwrap();
        assert!(validate_pair(&clip.frames, &clip.audio).is_valid());
        assert_eq!(clip.audio.samples().len(), 40 * SAMPLES_PER_FRAME);
        assert!(clip.frames.iter().all(|f| f.is_padded()));
    }

    #[test]
    fn pitch_follows_designated_point() {
        let spec = short(2);
        let clip = generate_synthetic_clip(&spec, "c").unwrap();
        let y = clip.trajectory.series(2 * spec.coupling.pitch_point + 1);
        let f0: Vec<f64> = clip.pitch.f0().iter().map(|v| *v as f64).collect();
        assert!(pearson(&y, &f0).unwrap() < -0.99);
    }

    #[test]
    fn pitch_tracks_absolute_row_across_clips() {
        // Pool frames from clips with different static offsets.
        let (mut y, mut f0) = (Vec::new(), Vec::new());
        for seed in 0..6 {
            let spec = short(seed);
            let clip = generate_synthetic_clip(&spec, "c").unwrap();
            y.extend(clip.trajectory.series(2 * spec.coupling.pitch_point + 1));
            f0.extend(clip.pitch.f0().iter().map(|v| *v as f64));
        }
        assert!(pearson(&y, &f0).unwrap() < -0.99);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(SyntheticSpec { chains: 4, ..Default::default() }.validate().is_err());
        assert!(SyntheticSpec { frames: 0, ..Default::default() }.validate().is_err());
        let mut s = SyntheticSpec::default();
        s.coupling.f0_max_hz = 600.0;
        assert!(s.validate().is_err());
    }
}
