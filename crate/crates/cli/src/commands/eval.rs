//! `vocaltrack eval`: compare predicted trajectories with references.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vocaltrack_core::io::{read_trajectory_file, TRAJECTORY_EXT};
use vocaltrack_core::metrics::{aggregate, evaluate_clip, ClipMetrics, CorpusMetrics};
use vocaltrack_core::types::Trajectory;

use crate::error::{CliError, CliResult, Context};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub corpus: CorpusMetrics,
    pub clips: Vec<ClipMetrics>,
}

/// Trajectories of a directory keyed by the clip id in their headers.
pub fn read_dir(dir: &Path) -> CliResult<BTreeMap<String, Trajectory>> {
    let entries = std::fs::read_dir(dir).usage(&format!("cannot read {}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == TRAJECTORY_EXT))
        .collect();
    paths.sort();
    let mut out = BTreeMap::new();
    for p in paths {
        let (traj, header) = read_trajectory_file(&p)?;
        if out.insert(header.clip_id.clone(), traj).is_some() {
            return Err(CliError::Runtime(format!("clip '{}' appears twice in {}", header.clip_id, dir.display())));
        }
    }
    Ok(out)
}

pub fn evaluate(pred: &BTreeMap<String, Trajectory>, reference: &BTreeMap<String, Trajectory>) -> CliResult<EvalReport> {
    let missing_ref: Vec<&str> = pred.keys().filter(|k| !reference.contains_key(*k)).map(String::as_str).collect();
    let missing_pred: Vec<&str> = reference.keys().filter(|k| !pred.contains_key(*k)).map(String::as_str).collect();
    if !missing_ref.is_empty() || !missing_pred.is_empty() {
        let mut msg = String::from("unmatched clips:");
        if !missing_ref.is_empty() {
            msg += &format!(" no reference for [{}]", missing_ref.join(", "));
        }
        if !missing_pred.is_empty() {
            msg += &format!(" no prediction for [{}]", missing_pred.join(", "));
        }
        return Err(CliError::Runtime(msg));
    }
    if pred.is_empty() {
        return Err(CliError::Runtime("no trajectories to evaluate".into()));
    }
    let clips = pred
        .iter()
        .map(|(id, p)| {
            let mut m = evaluate_clip(p, &reference[id]).map_err(|e| CliError::Runtime(format!("clip '{id}': {e}")))?;
            m.clip_id = id.clone();
            Ok(m)
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        corpus: aggregate(&clips),
        clips,
    })
}

pub fn run(pred_dir: &Path, ref_dir: &Path, out: Option<&Path>) -> CliResult<EvalReport> {
    let report = evaluate(&read_dir(pred_dir)?, &read_dir(ref_dir)?)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match out {
        Some(path) => std::fs::write(path, json).runtime(&format!("writing {}", path.display()))?,
        None => print!("{json}"),
    }
    Ok(report)
}
