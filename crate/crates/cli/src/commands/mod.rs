pub mod bias;
pub mod density;
pub mod masks;
pub mod report;
pub mod rollout;
pub mod score;
pub mod stats;
pub mod tune;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::provenance::Outputs;
use crate::Global;

/// Config snapshot for a run manifest: global settings plus the
/// subcommand's own arguments.
pub(crate) fn snapshot<A: Serialize>(global: &Global, args: &A) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::json!({
        "global": serde_json::to_value(global)?,
        "args": serde_json::to_value(args)?,
    }))
}

pub(crate) fn seeds(pairs: &[(&str, u64)]) -> BTreeMap<String, u64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Maps `items` in parallel, `CHUNK` at a time, handing each chunk's
/// results to `sink` in input order. The first failure in input order is
/// the one reported.
pub(crate) fn chunked<T, R, F, S>(items: &[T], work: F, mut sink: S) -> anyhow::Result<()>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> anyhow::Result<R> + Sync,
    S: FnMut(R) -> anyhow::Result<()>,
{
    for chunk in items.chunks(crate::CHUNK) {
        let results: Vec<anyhow::Result<R>> = chunk.par_iter().map(&work).collect();
        for r in results {
            sink(r?)?;
        }
    }
    Ok(())
}

/// CSV writer into memory with `\n` line endings.
pub(crate) fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

pub(crate) fn csv_bytes(w: csv::Writer<Vec<u8>>) -> anyhow::Result<Vec<u8>> {
    w.into_inner().map_err(|e| anyhow::anyhow!("flushing CSV: {e}"))
}

pub(crate) fn dir_label(dir: &Path) -> String {
    dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into())
}

pub(crate) fn file_name(p: &Path) -> PathBuf {
    PathBuf::from(p.file_name().unwrap_or_default())
}

/// Output collector rooted at the directory holding `file`.
pub(crate) fn file_output(file: &Path) -> anyhow::Result<(Outputs, PathBuf)> {
    let dir = match file.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    Ok((Outputs::in_dir(dir)?, file_name(file)))
}
