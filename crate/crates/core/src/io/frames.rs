use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{f32_payload, join_container, read_all, split_container, write_atomic};
use crate::error::{Error, Result};
use crate::types::{pad_frame, Frame, GRID, NATIVE_SIZE};

pub const FRAME_STACK_EXT: &str = "vframes";
const MAGIC: &[u8; 4] = b"VTFS";
const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StackHeader {
    schema_version: u32,
    frames: usize,
    height: usize,
    width: usize,
}

/// Native frames are padded; values outside `[0, 1]` trigger per-frame
/// min-max normalization.
fn to_model_frame(height: usize, width: usize, pixels: Vec<f32>) -> Result<Frame> {
    let frame = if pixels.iter().all(|v| (0.0..=1.0).contains(v)) {
        Frame::new(height, width, pixels)?
    } else {
        Frame::from_raw(height, width, &pixels)?
    };
    match (height, width) {
        (GRID, GRID) => Ok(frame),
        (NATIVE_SIZE, NATIVE_SIZE) => pad_frame(&frame),
        _ => Err(Error::Shape(format!(
            "frames must be {NATIVE_SIZE}×{NATIVE_SIZE} or {GRID}×{GRID}, got {height}×{width}"
        ))),
    }
}

/// Single-file f32 container: `b"VTFS"`, u32 LE header length, JSON header
/// `{schema_version, frames, height, width}`, then row-major f32 LE pixels.
pub fn write_frame_stack(path: &Path, frames: &[Frame]) -> Result<()> {
    let (height, width) = frames.first().map_or((0, 0), |f| (f.height(), f.width()));
    if frames.iter().any(|f| f.height() != height || f.width() != width) {
        return Err(Error::Shape("all frames of a stack must share one size".into()));
    }
    let header = serde_json::to_vec(&StackHeader {
        schema_version: SCHEMA_VERSION,
        frames: frames.len(),
        height,
        width,
    })?;
    let pixels: Vec<f32> = frames.iter().flat_map(|f| f.pixels().iter().copied()).collect();
    write_atomic(path, &join_container(MAGIC, &header, &pixels))
}

pub fn read_frame_stack(path: &Path) -> Result<Vec<Frame>> {
    let bytes = read_all(path)?;
    let (json, payload) = split_container(&bytes, MAGIC, "frame stack")?;
    let h: StackHeader = serde_json::from_slice(json)?;
    if h.schema_version != SCHEMA_VERSION {
        return Err(Error::Format(format!("frame stack schema {} is not supported", h.schema_version)));
    }
    let n = h.height * h.width;
    let data = f32_payload(payload, h.frames * n, "frame stack")?;
    if n == 0 {
        return Ok(Vec::new());
    }
    data.chunks_exact(n)
        .map(|c| to_model_frame(h.height, h.width, c.to_vec()))
        .collect()
}

fn png_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    Ok(paths)
}

fn read_png(path: &Path) -> Result<Frame> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let bad = |e: png::DecodingError| Error::Format(format!("{}: {e}", path.display()));
    let mut reader = decoder.read_info().map_err(bad)?;
    let mut buf = vec![0u8; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf).map_err(bad)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let sixteen = info.bit_depth == png::BitDepth::Sixteen;
    let sample = |i: usize| -> f32 {
        if sixteen {
            u16::from_be_bytes([buf[2 * i], buf[2 * i + 1]]) as f32 / 65535.0
        } else {
            buf[i] as f32 / 255.0
        }
    };
    let gray: Vec<f32> = (0..w * h)
        .map(|p| match channels {
            1 | 2 => sample(p * channels),
            _ => {
                let b = p * channels;
                0.299 * sample(b) + 0.587 * sample(b + 1) + 0.114 * sample(b + 2)
            }
        })
        .collect();
    to_model_frame(h, w, gray)
}

/// Lossless grayscale image sequence, read in file-name order.
pub fn read_png_dir(dir: &Path) -> Result<Vec<Frame>> {
    png_paths(dir)?.iter().map(|p| read_png(p)).collect()
}

/// Writes `frame_00000.png`, … as 16-bit grayscale.
pub fn write_png_dir(dir: &Path, frames: &[Frame]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, f) in frames.iter().enumerate() {
        let path = dir.join(format!("frame_{i:05}.png"));
        let mut bytes = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut bytes, f.width() as u32, f.height() as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Sixteen);
            let bad = |e: png::EncodingError| Error::Format(format!("{}: {e}", path.display()));
            let mut w = enc.write_header().map_err(bad)?;
            let data: Vec<u8> = f
                .pixels()
                .iter()
                .flat_map(|v| ((v * 65535.0).round() as u16).to_be_bytes())
                .collect();
            w.write_image_data(&data).map_err(bad)?;
        }
        write_atomic(&path, &bytes)?;
    }
    Ok(())
}

/// Reads a PNG directory or a frame-stack file.
pub fn load_frames(path: &Path) -> Result<Vec<Frame>> {
    if path.is_dir() {
        read_png_dir(path)
    } else {
        read_frame_stack(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(side: usize, k: f32) -> Frame {
        let px = (0..side * side).map(|i| ((i as f32 * k) % 1.0).abs()).collect();
        Frame::new(side, side, px).unwrap()
    }

    #[test]
    fn stack_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.vframes");
        let frames = vec![ramp(GRID, 0.013), ramp(GRID, 0.021)];
        write_frame_stack(&path, &frames).unwrap();
        assert_eq!(read_frame_stack(&path).unwrap(), frames);
    }

    #[test]
    fn native_frames_are_padded_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.vframes");
        write_frame_stack(&path, &[ramp(NATIVE_SIZE, 0.01)]).unwrap();
        let back = read_frame_stack(&path).unwrap();
        assert!(back[0].is_padded());
    }

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let frames = vec![ramp(GRID, 0.017), ramp(GRID, 0.029)];
        write_png_dir(dir.path(), &frames).unwrap();
        let back = read_png_dir(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in frames.iter().zip(&back) {
            for (x, y) in a.pixels().iter().zip(b.pixels()) {
                assert!((x - y).abs() <= 0.5 / 65535.0 + 1e-7);
            }
        }
    }
}
