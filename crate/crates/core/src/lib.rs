//! Vocal-tract keypoint segmentation from MRI video, with audio fusion.

pub mod augment;
pub mod codec;
pub mod error;
pub mod filter;
pub mod fusion;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod types;
pub mod synth;
pub mod unet;

pub use error::{Error, Result};
