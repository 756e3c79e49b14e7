//! `vocaltrack smooth`: temporal Gaussian filtering of trajectory files.

use std::path::Path;

use vocaltrack_core::filter::{smooth, FilterConfig};
use vocaltrack_core::io::{read_trajectory_file, write_trajectory_file, Provenance, TRAJECTORY_EXT};

use crate::error::{CliError, CliResult, Context};

fn smooth_file(input: &Path, output: &Path, cfg: &FilterConfig) -> CliResult<()> {
    let (traj, header) = read_trajectory_file(input)?;
    let provenance = match header.provenance {
        Provenance::Unet => Provenance::UnetSmoothed,
        p => p,
    };
    write_trajectory_file(output, &smooth(&traj, cfg), provenance)?;
    Ok(())
}

/// Smooths one file, or every trajectory file of a directory into `output`.
pub fn run(input: &Path, output: &Path, sigma: f64) -> CliResult<usize> {
    let cfg = FilterConfig::new(sigma).usage("invalid --sigma")?;
    if !input.is_dir() {
        smooth_file(input, output, &cfg)?;
        return Ok(1);
    }
    std::fs::create_dir_all(output).usage(&format!("cannot create {}", output.display()))?;
    let mut n = 0;
    let mut entries: Vec<_> = std::fs::read_dir(input)
        .usage(&format!("cannot read {}", input.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == TRAJECTORY_EXT))
        .collect();
    entries.sort();
    for p in entries {
        let name = p.file_name().ok_or_else(|| CliError::Runtime("bad file name".into()))?;
        smooth_file(&p, &output.join(name), &cfg)?;
        n += 1;
    }
    Ok(n)
}
