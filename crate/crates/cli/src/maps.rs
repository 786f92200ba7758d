//! Directories of per-image 2-D maps named `<image_id>.npy`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use gaze_align_core::tensor_io::{npy, ElementType, NpyTensor};
use gaze_align_core::Grid2D;

use crate::provenance::FileRecord;

/// Map files keyed by image id. Files whose stem is not an integer are
/// ignored, so a directory may also hold heatmaps and CSVs.
pub fn scan_map_dir(dir: &Path) -> anyhow::Result<BTreeMap<u64, PathBuf>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    let mut maps = BTreeMap::new();
    for entry in entries {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("npy") {
            continue;
        }
        let Some(id) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok()) else {
            continue;
        };
        maps.insert(id, dir.join(format!("{id}.npy")));
    }
    if maps.is_empty() {
        bail!("{}: no <image_id>.npy maps found", dir.display());
    }
    Ok(maps)
}

pub fn read_grid(path: &Path) -> anyhow::Result<(Grid2D, FileRecord)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let record = FileRecord::of(path, &bytes);
    let grid =
        npy::decode(&bytes).and_then(|t| t.to_grid()).with_context(|| format!("{}: not a 2-D map", path.display()))?;
    Ok((grid, record))
}

pub fn encode_grid(grid: &Grid2D) -> Vec<u8> {
    npy::encode(&NpyTensor::from_grid(grid, ElementType::F64))
}
