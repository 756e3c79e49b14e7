//! On-disk formats: trajectories, frame stacks, WAV audio, manifests.

mod frames;
mod manifest;
mod trajectory;
mod wav;

pub use frames::{
    load_frames, read_frame_stack, read_png_dir, write_frame_stack, write_png_dir, FRAME_STACK_EXT,
};
pub use manifest::{ClipRecord, Manifest, MANIFEST_SCHEMA_VERSION};
pub use trajectory::{
    read_trajectory, read_trajectory_file, write_trajectory, write_trajectory_file, Provenance,
    TrajectoryHeader, TRAJECTORY_EXT, TRAJECTORY_SCHEMA_VERSION,
};
pub use wav::{read_wav, read_wav_file, write_wav, write_wav_file};

use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn read_all(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temporary file so readers never see a partial
/// file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Splits `magic | u32 LE header length | JSON header | payload`.
pub(crate) fn split_container<'a>(bytes: &'a [u8], magic: &[u8; 4], what: &str) -> Result<(&'a [u8], &'a [u8])> {
    if bytes.len() < 8 || &bytes[..4] != magic {
        return Err(Error::Format(format!("not a {what} file")));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if bytes.len() < 8 + hlen {
        return Err(Error::Format(format!("truncated {what} header")));
    }
    Ok((&bytes[8..8 + hlen], &bytes[8 + hlen..]))
}

pub(crate) fn join_container(magic: &[u8; 4], header: &[u8], payload: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + header.len() + 4 * payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    for v in payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub(crate) fn f32_payload(bytes: &[u8], expected: usize, what: &str) -> Result<Vec<f32>> {
    if bytes.len() != 4 * expected {
        return Err(Error::Format(format!(
            "{what} payload has {} bytes, header implies {}",
            bytes.len(),
            4 * expected
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}
