//! `vocaltrack render`: keypoints drawn over the frames as a Y4M video,
//! one panel per trajectory.

use std::io::{BufWriter, Write};
use std::path::Path;

use vocaltrack_core::io::{load_frames, read_trajectory_file};
use vocaltrack_core::types::{Frame, Trajectory};

use crate::error::{CliError, CliResult, Context};

/// Integer upscaling of each panel.
pub const SCALE: usize = 4;
/// 16 kHz audio at 192 samples per frame.
pub const FRAME_RATE_NUM: usize = 250;
pub const FRAME_RATE_DEN: usize = 3;

const MARKER: [u8; 3] = [255, 64, 32];
const SEPARATOR: usize = 4;

/// A full-resolution 4:4:4 frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[u8; 3]>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            rgb: vec![[0; 3]; width * height],
        }
    }

    pub fn panel(&self, index: usize, panel_width: usize) -> Canvas {
        let x0 = index * (panel_width + SEPARATOR);
        let mut out = Canvas::new(panel_width, self.height);
        for r in 0..self.height {
            let src = &self.rgb[r * self.width + x0..r * self.width + x0 + panel_width];
            out.rgb[r * panel_width..(r + 1) * panel_width].copy_from_slice(src);
        }
        out
    }

    /// BT.601 full-range planes.
    fn yuv_planes(&self) -> [Vec<u8>; 3] {
        let n = self.rgb.len();
        let mut planes = [vec![0u8; n], vec![0u8; n], vec![0u8; n]];
        for (i, &[r, g, b]) in self.rgb.iter().enumerate() {
            let (r, g, b) = (r as f32, g as f32, b as f32);
            let y = 0.299 * r + 0.587 * g + 0.114 * b;
            let u = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
            let v = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
            planes[0][i] = y.round().clamp(0.0, 255.0) as u8;
            planes[1][i] = u.round().clamp(0.0, 255.0) as u8;
            planes[2][i] = v.round().clamp(0.0, 255.0) as u8;
        }
        planes
    }
}

fn draw_panel(canvas: &mut Canvas, x0: usize, frame: &Frame, points: &[f32], color: [u8; 3]) {
    let (h, w) = (frame.height(), frame.width());
    for r in 0..h * SCALE {
        for c in 0..w * SCALE {
            let v = (frame.get(r / SCALE, c / SCALE).clamp(0.0, 1.0) * 255.0).round() as u8;
            canvas.rgb[r * canvas.width + x0 + c] = [v; 3];
        }
    }
    for p in points.chunks_exact(2) {
        let cx = ((p[0] as f64 + 0.5) * SCALE as f64).floor() as i64;
        let cy = ((p[1] as f64 + 0.5) * SCALE as f64).floor() as i64;
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (x, y) = (cx + dx, cy + dy);
                if x >= 0 && y >= 0 && (x as usize) < w * SCALE && (y as usize) < h * SCALE {
                    canvas.rgb[y as usize * canvas.width + x0 + x as usize] = color;
                }
            }
        }
    }
}

/// Composes one canvas per frame; the second panel appears when `b` is given.
pub fn compose(frames: &[Frame], a: &Trajectory, b: Option<&Trajectory>) -> CliResult<Vec<Canvas>> {
    for t in std::iter::once(a).chain(b) {
        if t.len() != frames.len() {
            return Err(CliError::Runtime(format!(
                "trajectory '{}' has {} frames but the video has {}",
                t.clip_id,
                t.len(),
                frames.len()
            )));
        }
    }
    let Some(first) = frames.first() else {
        return Err(CliError::Runtime("no frames to render".into()));
    };
    let (pw, ph) = (first.width() * SCALE, first.height() * SCALE);
    let panels = if b.is_some() { 2 } else { 1 };
    let width = panels * pw + (panels - 1) * SEPARATOR;
    Ok(frames
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let mut canvas = Canvas::new(width, ph);
            draw_panel(&mut canvas, 0, f, a.frame_coords(t), MARKER);
            if let Some(b) = b {
                draw_panel(&mut canvas, pw + SEPARATOR, f, b.frame_coords(t), MARKER);
            }
            canvas
        })
        .collect())
}

pub fn write_y4m<W: Write>(out: W, canvases: &[Canvas]) -> CliResult<()> {
    let first = canvases.first().ok_or_else(|| CliError::Runtime("no frames to render".into()))?;
    let mut enc = y4m::encode(first.width, first.height, y4m::Ratio::new(FRAME_RATE_NUM, FRAME_RATE_DEN))
        .with_colorspace(y4m::Colorspace::C444)
        .write_header(out)
        .runtime("writing video header")?;
    for c in canvases {
        let [y, u, v] = c.yuv_planes();
        enc.write_frame(&y4m::Frame::new([&y, &u, &v], None))
            .runtime("writing video frame")?;
    }
    Ok(())
}

pub fn run(frames: &Path, a: &Path, b: Option<&Path>, out: &Path) -> CliResult<usize> {
    let frames = load_frames(frames)?;
    let (ta, _) = read_trajectory_file(a)?;
    let tb = b.map(read_trajectory_file).transpose()?.map(|(t, _)| t);
    let canvases = compose(&frames, &ta, tb.as_ref())?;
    let file = std::fs::File::create(out).runtime(&format!("cannot create {}", out.display()))?;
    let mut w = BufWriter::new(file);
    write_y4m(&mut w, &canvases)?;
    w.flush().runtime("writing video")?;
    Ok(canvases.len())
}
