use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use gaze_align_core::fixation::{interobserver_consistency, observer_density_maps, pooled_density_map, DEFAULT_SIZE};
use gaze_align_core::tensor_io::{parse_fixations, FixationSet, ManifestEntry, TensorManifest};

use super::{chunked, csv_bytes, csv_writer, seeds, snapshot};
use crate::format::{encode_pgm, fmt9};
use crate::maps::encode_grid;
use crate::provenance::{read_input_text, Outputs, DIR_MANIFEST};
use crate::{CliResult, Global};

#[derive(Debug, Args, Serialize)]
pub struct DensityArgs {
    /// Fixation JSON (per-observer records at original resolution).
    #[arg(long)]
    pub fixations: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Square target resolution in pixels.
    #[arg(long, default_value_t = DEFAULT_SIZE)]
    pub size: usize,
    /// Also write 8-bit PGM heatmaps.
    #[arg(long)]
    pub pgm: bool,
    /// Also compute inter-observer consistency (mean pairwise CC).
    #[arg(long)]
    pub consistency: bool,
}

struct Done {
    id: u64,
    observers: usize,
    fixations: usize,
    flat: bool,
    npy: Vec<u8>,
    pgm: Option<Vec<u8>>,
    consistency: Option<(f64, usize, usize)>,
}

pub fn run(g: &Global, a: &DensityArgs) -> CliResult<()> {
    if a.size == 0 {
        return crate::error::usage("--size must be positive");
    }
    let (text, input) = read_input_text(&a.fixations)?;
    let mut sets = parse_fixations(&text, (a.size, a.size)).with_context(|| format!("{}", a.fixations.display()))?;
    sets.sort_by_key(|s| s.image_id);

    let mut out = Outputs::in_dir(&a.out)?;
    let mut table = csv_writer();
    let mut header = vec!["image_id", "observers", "fixations", "flat"];
    if a.consistency {
        header.extend(["consistency_cc", "pairs_used", "pairs_skipped"]);
    }
    table.write_record(&header).map_err(anyhow::Error::from)?;
    let mut entries = Vec::new();

    let work = |set: &FixationSet| -> anyhow::Result<Done> {
        let ctx = || format!("{}: image {}", a.fixations.display(), set.image_id);
        let map = pooled_density_map(set, g.sigma).with_context(ctx)?;
        let consistency = if a.consistency && set.observers.len() >= 2 {
            let maps = observer_density_maps(set, g.sigma).with_context(ctx)?;
            let c = interobserver_consistency(&maps).with_context(ctx)?;
            Some((c.mean_cc, c.pairs_used, c.pairs_skipped))
        } else {
            None
        };
        Ok(Done {
            id: set.image_id,
            observers: set.observers.len(),
            fixations: set.fixation_count(),
            flat: map.flat,
            npy: encode_grid(&map.grid),
            pgm: a.pgm.then(|| encode_pgm(&map.grid)),
            consistency,
        })
    };
    chunked(&sets, work, |d| {
        out.write(format!("{}.npy", d.id), &d.npy)?;
        if let Some(p) = &d.pgm {
            out.write(format!("{}.pgm", d.id), p)?;
        }
        let mut row = vec![d.id.to_string(), d.observers.to_string(), d.fixations.to_string(), d.flat.to_string()];
        if a.consistency {
            match d.consistency {
                Some((cc, used, skipped)) => row.extend([fmt9(cc), used.to_string(), skipped.to_string()]),
                None => row.extend([String::new(), "0".into(), "0".into()]),
            }
        }
        table.write_record(&row)?;
        entries.push(ManifestEntry { image_id: d.id, tensor_path: format!("{}.npy", d.id).into() });
        Ok(())
    })?;

    out.write("densities.csv", &csv_bytes(table)?)?;
    out.write_json("manifest.json", &TensorManifest { model: "fixation-density".into(), entries })?;
    out.finish(DIR_MANIFEST, "density", snapshot(g, a)?, seeds(&[]), vec![input])?;
    Ok(())
}
