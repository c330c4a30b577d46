//! Stage cache: a stage directory is reused when its stamp records the
//! same key and every recorded output still has its recorded hash. The key
//! hashes the stage name, the content of every declared input and the
//! configuration subset the stage depends on.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::digest::sha256_hex;

pub(crate) const STAMP: &str = ".stamp.json";

#[derive(Debug, Serialize, Deserialize)]
struct Stamp {
    stage: String,
    key: String,
    outputs: BTreeMap<String, String>,
}

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Io { path: path.to_path_buf(), source: e }
}

pub(crate) fn file_hash(path: &Path) -> Result<String, PipelineError> {
    std::fs::read(path).map(|b| sha256_hex(&b)).map_err(|e| io_err(path, e))
}

/// Cache key of a stage. Inputs are `(logical name, path)` pairs so the
/// key does not depend on where the run directory lives.
pub(crate) fn stage_key<C: Serialize>(
    stage: &str,
    inputs: &[(String, PathBuf)],
    config: &C,
) -> Result<String, PipelineError> {
    let mut text = format!("stage {stage}\n");
    let mut inputs: Vec<&(String, PathBuf)> = inputs.iter().collect();
    inputs.sort_by(|a, b| a.0.cmp(&b.0));
    for (name, path) in inputs {
        text.push_str(&format!("input {name} {}\n", file_hash(path)?));
    }
    let cfg = serde_json::to_string(config).map_err(|e| PipelineError::Config(e.to_string()))?;
    text.push_str(&format!("config {cfg}\n"));
    Ok(sha256_hex(text.as_bytes()))
}

fn files_under(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| io_err(&d, e))? {
            let p = entry.map_err(|e| io_err(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != STAMP) {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn relative(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// True when `dir` holds a complete, unmodified result for `key`.
pub(crate) fn is_fresh(dir: &Path, key: &str) -> bool {
    let Ok(text) = std::fs::read_to_string(dir.join(STAMP)) else {
        return false;
    };
    let Ok(stamp) = serde_json::from_str::<Stamp>(&text) else {
        return false;
    };
    stamp.key == key
        && stamp
            .outputs
            .iter()
            .all(|(rel, h)| file_hash(&dir.join(rel)).is_ok_and(|actual| &actual == h))
}

/// Empties `dir` before a stage writes into it.
pub(crate) fn reset(dir: &Path) -> Result<(), PipelineError> {
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

/// Records every file under `dir` as an output of `key`.
pub(crate) fn seal(dir: &Path, stage: &str, key: &str) -> Result<(), PipelineError> {
    let mut outputs = BTreeMap::new();
    for p in files_under(dir)? {
        outputs.insert(relative(dir, &p), file_hash(&p)?);
    }
    let stamp = Stamp { stage: stage.to_string(), key: key.to_string(), outputs };
    let path = dir.join(STAMP);
    let text = serde_json::to_string_pretty(&stamp).expect("stamp serializes");
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}
