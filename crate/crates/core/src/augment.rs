//! Random affine augmentation applied jointly to frames and keypoints.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Frame, KeypointSet, GRID};

/// Center of the padded grid, the fixed point of the linear part.
pub const CENTER: [f64; 2] = [48.0, 48.0];
/// Attempts before falling back to the identity transform.
pub const MAX_ATTEMPTS: usize = 10;

/// `p' = A·(p − c) + c + t` with `c` the grid center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineTransform {
    linear: [[f64; 2]; 2],
    translation: [f64; 2],
}

impl AffineTransform {
    pub fn new(linear: [[f64; 2]; 2], translation: [f64; 2]) -> Result<Self> {
        let det = linear[0][0] * linear[1][1] - linear[0][1] * linear[1][0];
        if !(det.abs() > 1e-12) || !det.is_finite() || translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("singular or non-finite affine transform (det {det})")));
        }
        Ok(Self {
            linear,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            linear: [[1.0, 0.0], [0.0, 1.0]],
            translation: [0.0, 0.0],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            translation: [tx, ty],
            ..Self::identity()
        }
    }

    /// Rotation by `degrees` (x toward y) about the grid center.
    pub fn rotation(degrees: f64) -> Self {
        let (s, c) = degrees.to_radians().sin_cos();
        Self {
            linear: [[c, -s], [s, c]],
            translation: [0.0, 0.0],
        }
    }

    pub fn linear(&self) -> [[f64; 2]; 2] {
        self.linear
    }

    pub fn translation_vector(&self) -> [f64; 2] {
        self.translation
    }

    pub fn determinant(&self) -> f64 {
        self.linear[0][0] * self.linear[1][1] - self.linear[0][1] * self.linear[1][0]
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = (x - CENTER[0], y - CENTER[1]);
        let a = self.linear;
        (
            a[0][0] * dx + a[0][1] * dy + CENTER[0] + self.translation[0],
            a[1][0] * dx + a[1][1] * dy + CENTER[1] + self.translation[1],
        )
    }

    pub fn inverse_apply(&self, x: f64, y: f64) -> (f64, f64) {
        let a = self.linear;
        let det = self.determinant();
        let (dx, dy) = (
            x - CENTER[0] - self.translation[0],
            y - CENTER[1] - self.translation[1],
        );
        (
            (a[1][1] * dx - a[0][1] * dy) / det + CENTER[0],
            (-a[1][0] * dx + a[0][0] * dy) / det + CENTER[1],
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Symmetric rotation range, ± degrees.
    pub rotation_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Symmetric translation range, ± pixels on each axis.
    pub translation_px: f64,
    /// Symmetric horizontal shear range, ± degrees.
    pub shear_deg: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            rotation_deg: 10.0,
            scale_min: 0.9,
            scale_max: 1.1,
            translation_px: 5.0,
            shear_deg: 5.0,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            enabled: false,
            rotation_deg: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            translation_px: 0.0,
            shear_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [self.rotation_deg, self.translation_px, self.shear_deg];
        if ranges.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::Invalid("augmentation ranges must be finite and nonnegative".into()));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= 1.0 && self.scale_max >= 1.0 && self.scale_max.is_finite()) {
            return Err(Error::Invalid(format!(
                "scale range [{}, {}] must be positive and contain 1",
                self.scale_min, self.scale_max
            )));
        }
        if self.shear_deg >= 90.0 {
            return Err(Error::Invalid("shear range must stay below 90°".into()));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draws rotation, scale, shear and translation uniformly from their ranges.
/// `A = R(θ)·H(φ)·s`.
pub fn sample_affine<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> AffineTransform {
    let theta = uniform(rng, -cfg.rotation_deg, cfg.rotation_deg).to_radians();
    let scale = uniform(rng, cfg.scale_min, cfg.scale_max);
    let shear = uniform(rng, -cfg.shear_deg, cfg.shear_deg).to_radians().tan();
    let tx = uniform(rng, -cfg.translation_px, cfg.translation_px);
    let ty = uniform(rng, -cfg.translation_px, cfg.translation_px);
    let (s, c) = theta.sin_cos();
    // R·H with H = [[1, shear], [0, 1]]
    let linear = [
        [c * scale, (c * shear - s) * scale],
        [s * scale, (s * shear + c) * scale],
    ];
    AffineTransform {
        linear,
        translation: [tx, ty],
    }
}

/// Rotation angle in degrees of a transform built by [`sample_affine`].
pub fn rotation_of(t: &AffineTransform) -> f64 {
    t.linear[1][0].atan2(t.linear[0][0]).to_degrees()
}

/// Inverse-warps a padded frame with bilinear interpolation; samples outside
/// the source read as 0.
pub fn apply_to_frame(frame: &Frame, t: &AffineTransform) -> Result<Frame> {
    if !frame.is_padded() {
        return Err(Error::Shape("affine warp expects a padded 96×96 frame".into()));
    }
    let n = GRID as isize;
    let src = frame.pixels();
    let read = |r: isize, c: isize| -> f32 {
        if r < 0 || c < 0 || r >= n || c >= n {
            0.0
        } else {
            src[r as usize * GRID + c as usize]
        }
    };
    let mut out = vec![0.0f32; GRID * GRID];
    for r in 0..GRID {
        for c in 0..GRID {
            let (sx, sy) = t.inverse_apply(c as f64, r as f64);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = ((sx - x0) as f32, (sy - y0) as f32);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let v = read(y0, x0) * (1.0 - fx) * (1.0 - fy)
                + read(y0, x0 + 1) * fx * (1.0 - fy)
                + read(y0 + 1, x0) * (1.0 - fx) * fy
                + read(y0 + 1, x0 + 1) * fx * fy;
            out[r * GRID + c] = v.clamp(0.0, 1.0);
        }
    }
    Frame::new(GRID, GRID, out)
}

/// Transforms keypoints exactly; the mask is `true` for points still inside
/// `[0, 96)`.
pub fn apply_to_points(points: &KeypointSet, t: &AffineTransform) -> (KeypointSet, Vec<bool>) {
    let mut valid = Vec::with_capacity(points.points().len());
    let moved = points
        .points()
        .iter()
        .map(|p| {
            let (x, y) = t.apply(p[0] as f64, p[1] as f64);
            let (x, y) = (x as f32, y as f32);
            valid.push((0.0..GRID as f32).contains(&x) && (0.0..GRID as f32).contains(&y));
            [x, y]
        })
        .collect();
    (KeypointSet::new(moved).expect("affine image of finite points is finite"), valid)
}

/// Samples a transform keeping every point inside the grid, retrying up to
/// [`MAX_ATTEMPTS`] times before returning the identity.
pub fn sample_valid_affine<R: Rng + ?Sized>(
    cfg: &AugmentConfig,
    points: &KeypointSet,
    rng: &mut R,
) -> AffineTransform {
    for _ in 0..MAX_ATTEMPTS {
        let t = sample_affine(cfg, rng);
        if apply_to_points(points, &t).1.iter().all(|v| *v) {
            return t;
        }
    }
    AffineTransform::identity()
}

/// Applies one random valid transform to a frame and its annotations.
pub fn augment<R: Rng + ?Sized>(
    frame: &Frame,
    points: &KeypointSet,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(Frame, KeypointSet)> {
    if !cfg.enabled {
        return Ok((frame.clone(), points.clone()));
    }
    let t = sample_valid_affine(cfg, points, rng);
    let warped = apply_to_frame(frame, &t)?;
    Ok((warped, apply_to_points(points, &t).0))
}
