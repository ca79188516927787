use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use colf::continual::RunResult;
use colf::memory::UpdateReport;
use serde::Serialize;

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("cannot create {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("cannot move {} into place", path.display()))?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn csv_bytes<R: AsRef<[u8]>>(header: &[&str], rows: impl IntoIterator<Item = Vec<R>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
}

/// File stem shared by a cell's outputs.
pub fn cell_stem(strategy: &str, seed: u64) -> String {
    let safe: String = strategy
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}__seed{seed}")
}

pub const RUN_HEADER: [&str; 7] = ["strategy", "seed", "day", "auc", "logloss", "memory_size", "train_seconds"];

pub fn run_csv(result: &RunResult, timings: bool) -> Result<Vec<u8>> {
    csv_bytes(
        &RUN_HEADER,
        result.rows.iter().map(|r| {
            vec![
                result.strategy.clone(),
                result.seed.to_string(),
                r.day.to_string(),
                r.auc.to_string(),
                r.logloss.to_string(),
                r.memory_size.to_string(),
                if timings { r.train_seconds.to_string() } else { String::new() },
            ]
        }),
    )
}

pub fn memory_csv(log: &[UpdateReport]) -> Result<Vec<u8>> {
    csv_bytes(
        &["day", "n_partitions", "total_size", "discarded_days", "dropped_irrelevant", "cap_truncated"],
        log.iter().map(|m| {
            vec![
                m.day.to_string(),
                m.n_partitions.to_string(),
                m.total_size.to_string(),
                m.discarded_days
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(" "),
                m.dropped_irrelevant.to_string(),
                m.cap_truncated.to_string(),
            ]
        }),
    )
}
