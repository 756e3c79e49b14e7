use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{f32_payload, join_container, read_all, split_container, write_atomic};
use crate::error::{Error, Result};
use crate::types::{Trajectory, NUM_COORDS, NUM_POINTS};

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;
pub const TRAJECTORY_EXT: &str = "vtraj";
const MAGIC: &[u8; 4] = b"VTRJ";

/// Which pipeline stage produced a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Baseline,
    Unet,
    UnetSmoothed,
    Fusion,
    Synthetic,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::Baseline => "baseline",
            Provenance::Unet => "unet",
            Provenance::UnetSmoothed => "unet_smoothed",
            Provenance::Fusion => "fusion",
            Provenance::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

impl FromStr for Provenance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::Invalid(format!("unknown provenance '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub schema_version: u32,
    pub clip_id: String,
    pub frames: usize,
    pub n_points: usize,
    pub frame_rate: f64,
    pub provenance: Provenance,
}

/// Layout: `b"VTRJ"`, u32 LE header length, JSON header, then the
/// `[T, 95, 2]` coordinates as row-major f32 LE.
pub fn write_trajectory(traj: &Trajectory, provenance: Provenance) -> Vec<u8> {
    let header = TrajectoryHeader {
        schema_version: TRAJECTORY_SCHEMA_VERSION,
        clip_id: traj.clip_id.clone(),
        frames: traj.len(),
        n_points: NUM_POINTS,
        frame_rate: traj.frame_rate,
        provenance,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    join_container(MAGIC, &json, traj.coords())
}

pub fn read_trajectory(bytes: &[u8]) -> Result<(Trajectory, TrajectoryHeader)> {
    let (json, payload) = split_container(bytes, MAGIC, "trajectory")?;
    let header: TrajectoryHeader = serde_json::from_slice(json)?;
    if header.schema_version != TRAJECTORY_SCHEMA_VERSION {
        return Err(Error::Format(format!(
            "trajectory schema {} is not supported (expected {TRAJECTORY_SCHEMA_VERSION})",
            header.schema_version
        )));
    }
    if header.n_points != NUM_POINTS {
        return Err(Error::Format(format!("trajectory has {} points, expected {NUM_POINTS}", header.n_points)));
    }
    let coords = f32_payload(payload, header.frames * NUM_COORDS, "trajectory")?;
    let traj = Trajectory::from_flat(header.clip_id.clone(), header.frame_rate, coords)?;
    Ok((traj, header))
}

pub fn write_trajectory_file(path: &Path, traj: &Trajectory, provenance: Provenance) -> Result<()> {
    write_atomic(path, &write_trajectory(traj, provenance))
}

pub fn read_trajectory_file(path: &Path) -> Result<(Trajectory, TrajectoryHeader)> {
    read_trajectory(&read_all(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let coords: Vec<f32> = (0..3 * NUM_COORDS).map(|i| (i as f32).sqrt() * 1.000_001 + 6.0).collect();
        let t = Trajectory::from_flat("clip-7", 83.333, coords).unwrap();
        let bytes = write_trajectory(&t, Provenance::UnetSmoothed);
        let (back, header) = read_trajectory(&bytes).unwrap();
        assert_eq!(header.provenance, Provenance::UnetSmoothed);
        assert_eq!(header.frames, 3);
        assert_eq!(back.clip_id, "clip-7");
        let bits = |t: &Trajectory| t.coords().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&t));
        assert_eq!(write_trajectory(&back, Provenance::UnetSmoothed), bytes);
    }

    #[test]
    fn payload_length_is_checked() {
        let t = Trajectory::from_flat("c", 83.0, vec![1.0; NUM_COORDS]).unwrap();
        let bytes = write_trajectory(&t, Provenance::Unet);
        assert!(read_trajectory(&bytes[..bytes.len() - 4]).is_err());
        assert!(read_trajectory(b"nope").is_err());
    }

    #[test]
    fn provenance_names() {
        for p in [Provenance::Baseline, Provenance::Unet, Provenance::UnetSmoothed, Provenance::Fusion, Provenance::Synthetic] {
            assert_eq!(p.to_string().parse::<Provenance>().unwrap(), p);
        }
        assert!("other".parse::<Provenance>().is_err());
    }
}
