//! Zero-phase temporal Gaussian smoothing of keypoint tracks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Trajectory, NUM_COORDS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Gaussian standard deviation in frames.
    pub sigma_frames: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { sigma_frames: 1.5 }
    }
}

impl FilterConfig {
    pub fn new(sigma_frames: f64) -> Result<Self> {
        if !(sigma_frames > 0.0 && sigma_frames.is_finite()) {
            return Err(Error::Invalid(format!(
                "filter sigma {sigma_frames} must be positive"
            )));
        }
        Ok(Self { sigma_frames })
    }

    /// Kernel half-width, `ceil(4σ)`.
    pub fn half_width(&self) -> usize {
        (4.0 * self.sigma_frames).ceil() as usize
    }
}

/// Normalized symmetric Gaussian taps of length `2·half_width + 1`.
pub fn gaussian_kernel(cfg: &FilterConfig) -> Vec<f64> {
    let half = cfg.half_width() as isize;
    let denom = 2.0 * cfg.sigma_frames * cfg.sigma_frames;
    let raw: Vec<f64> = (-half..=half).map(|n| (-((n * n) as f64) / denom).exp()).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

/// Reflect index into `0..len` without repeating the edge sample
/// (`… 2 1 | 0 1 2 … n-1 | n-2 …`).
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= len as isize {
        m = period - m;
    }
    m as usize
}

/// Convolves one sequence with `kernel` using reflect boundaries.
pub fn smooth_series(x: &[f64], kernel: &[f64]) -> Vec<f64> {
    let half = (kernel.len() / 2) as isize;
    (0..x.len() as isize)
        .map(|t| {
            kernel
                .iter()
                .enumerate()
                .map(|(j, w)| w * x[reflect(t + j as isize - half, x.len())])
                .sum()
        })
        .collect()
}

/// Smooths each of the 190 coordinate tracks independently.
pub fn smooth(traj: &Trajectory, cfg: &FilterConfig) -> Trajectory {
    let kernel = gaussian_kernel(cfg);
    let t_len = traj.len();
    let mut coords = vec![0.0f32; traj.coords().len()];
    for dim in 0..NUM_COORDS {
        let smoothed = smooth_series(&traj.series(dim), &kernel);
        for (t, v) in smoothed.into_iter().enumerate() {
            coords[t * NUM_COORDS + dim] = v as f32;
        }
    }
    debug_assert_eq!(coords.len(), t_len * NUM_COORDS);
    traj.with_coords(coords).expect("smoothing preserves shape and finiteness")
}

/// Magnitude of the kernel's frequency response at `omega` rad/sample.
pub fn frequency_response(kernel: &[f64], omega: f64) -> f64 {
    let half = (kernel.len() / 2) as isize;
    // Symmetric kernel → purely real response.
    kernel
        .iter()
        .enumerate()
        .map(|(j, w)| w * ((j as isize - half) as f64 * omega).cos())
        .sum::<f64>()
        .abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_shape_and_normalization() {
        for sigma in [0.3, 1.0, 1.5, 4.2] {
            let k = gaussian_kernel(&FilterConfig::new(sigma).unwrap());
            assert_eq!(k.len() % 2, 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..k.len() {
                assert_eq!(k[j], k[k.len() - 1 - j]);
                assert!(k[j] > 0.0);
            }
        }
    }

    #[test]
    fn kernel_closed_form_at_unit_sigma() {
        let k = gaussian_kernel(&FilterConfig::new(1.0).unwrap());
        assert_eq!(k.len(), 9);
        let raw: Vec<f64> = (-4..=4).map(|n: i32| (-(n * n) as f64 / 2.0).exp()).collect();
        let s: f64 = raw.iter().sum();
        for (a, b) in k.iter().zip(&raw) {
            assert!((a - b / s).abs() < 1e-15);
        }
    }

    #[test]
    fn tiny_sigma_is_an_impulse() {
        let k = gaussian_kernel(&FilterConfig::new(1e-6).unwrap());
        assert_eq!(k.len(), 3);
        assert!((k[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_sigma_rejected() {
        assert!(FilterConfig::new(0.0).is_err());
        assert!(FilterConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn reflect_indexing() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect(-7, 1), 0);
    }

    #[test]
    fn constant_ramp_and_nyquist() {
        let k = gaussian_kernel(&FilterConfig::default());
        let c = vec![3.25; 40];
        assert!(smooth_series(&c, &k).iter().all(|v| (v - 3.25).abs() < 1e-12));

        let ramp: Vec<f64> = (0..60).map(|t| 0.7 * t as f64 - 4.0).collect();
        let out = smooth_series(&ramp, &k);
        let half = k.len() / 2;
        for t in half..60 - half {
            assert!((out[t] - ramp[t]).abs() < 1e-9);
        }

        let alt: Vec<f64> = (0..200).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let out = smooth_series(&alt, &k);
        let peak = out[half..200 - half].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(20.0 * peak.log10() < -20.0);
        assert!(20.0 * frequency_response(&k, std::f64::consts::PI).log10() < -20.0);
    }

    #[test]
    fn single_frame_clip_is_unchanged() {
        let coords: Vec<f32> = (0..NUM_COORDS).map(|i| i as f32 * 0.5).collect();
        let traj = Trajectory::from_flat("one", 83.0, coords).unwrap();
        assert_eq!(smooth(&traj, &FilterConfig::default()), traj);
    }
}
