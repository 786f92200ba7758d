use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::Serialize;

use gaze_align_core::fixation::DEFAULT_SIZE;
use gaze_align_core::rollout::{rollout, NormaliseOrder, RolloutOptions};
use gaze_align_core::tensor_io::{npy, ManifestEntry, TensorManifest};

use super::{chunked, csv_bytes, csv_writer, seeds, snapshot};
use crate::format::encode_pgm;
use crate::maps::encode_grid;
use crate::provenance::{read_input, read_input_text, FileRecord, Outputs, DIR_MANIFEST};
use crate::{CliResult, Global};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderArg {
    AfterUpsample,
    BeforeUpsample,
}

impl From<OrderArg> for NormaliseOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::AfterUpsample => NormaliseOrder::AfterUpsample,
            OrderArg::BeforeUpsample => NormaliseOrder::BeforeUpsample,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RolloutArgs {
    /// Tensor manifest listing one L×H×T×T attention file per image.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Square target resolution in pixels.
    #[arg(long, default_value_t = DEFAULT_SIZE)]
    pub size: usize,
    /// Whether min-max normalisation happens after or before upsampling.
    #[arg(long, value_enum, default_value_t = OrderArg::AfterUpsample)]
    pub order: OrderArg,
    /// Also write 8-bit PGM heatmaps.
    #[arg(long)]
    pub pgm: bool,
}

struct Done {
    id: u64,
    shape: [usize; 4],
    flat: bool,
    npy: Vec<u8>,
    pgm: Option<Vec<u8>>,
    input: FileRecord,
}

pub fn run(g: &Global, a: &RolloutArgs) -> CliResult<()> {
    if a.size < 2 {
        return crate::error::usage("--size must be at least 2");
    }
    let (text, manifest_input) = read_input_text(&a.manifest)?;
    let mut manifest = TensorManifest::parse(&text).with_context(|| format!("{}", a.manifest.display()))?;
    let base = a.manifest.parent().map(PathBuf::from).unwrap_or_default();
    for e in &mut manifest.entries {
        if e.tensor_path.is_relative() {
            e.tensor_path = base.join(&e.tensor_path);
        }
    }
    let options = RolloutOptions { target: (a.size, a.size), order: a.order.into() };

    let mut out = Outputs::in_dir(&a.out)?;
    let mut inputs = vec![manifest_input];
    let mut table = csv_writer();
    table.write_record(["image_id", "layers", "heads", "tokens", "flat"]).map_err(anyhow::Error::from)?;
    let mut entries = Vec::new();

    let work = |e: &ManifestEntry| -> anyhow::Result<Done> {
        let path = &e.tensor_path;
        let (bytes, input) = read_input(path)?;
        let stack = npy::decode(&bytes)
            .and_then(|t| t.to_attention_stack())
            .with_context(|| format!("{}: image {} ({})", a.manifest.display(), e.image_id, path.display()))?;
        let map = rollout(&stack, options).with_context(|| format!("image {}", e.image_id))?;
        Ok(Done {
            id: e.image_id,
            shape: stack.shape(),
            flat: map.flat,
            npy: encode_grid(&map.upsampled),
            pgm: a.pgm.then(|| encode_pgm(&map.upsampled)),
            input,
        })
    };
    chunked(&manifest.entries, work, |d| {
        out.write(format!("{}.npy", d.id), &d.npy)?;
        if let Some(p) = &d.pgm {
            out.write(format!("{}.pgm", d.id), p)?;
        }
        let [l, h, t, _] = d.shape;
        table.write_record([d.id.to_string(), l.to_string(), h.to_string(), t.to_string(), d.flat.to_string()])?;
        entries.push(ManifestEntry { image_id: d.id, tensor_path: format!("{}.npy", d.id).into() });
        inputs.push(d.input);
        Ok(())
    })?;

    out.write("rollout.csv", &csv_bytes(table)?)?;
    out.write_json("manifest.json", &TensorManifest { model: manifest.model.clone(), entries })?;
    out.finish(DIR_MANIFEST, "rollout", snapshot(g, a)?, seeds(&[]), inputs)?;
    Ok(())
}
