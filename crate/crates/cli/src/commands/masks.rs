use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use gaze_align_core::fixation::DEFAULT_SIZE;
use gaze_align_core::masks::{build_scene, CategoryTable, Scene, SceneOptions};
use gaze_align_core::tensor_io::{parse_annotations, AnnotatedImage, ManifestEntry, TensorManifest};

use super::{chunked, csv_bytes, csv_writer, seeds, snapshot};
use crate::maps::encode_grid;
use crate::provenance::{read_input_text, FileRecord, Outputs, DIR_MANIFEST};
use crate::{CliResult, Global};

#[derive(Debug, Args, Serialize)]
pub struct MasksArgs {
    /// COCO-style instance annotation JSON.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Square canvas resolution after nearest-neighbour downsampling.
    #[arg(long, default_value_t = DEFAULT_SIZE)]
    pub size: usize,
    /// Replacement animate/inanimate/excluded category table.
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Paint crowd annotations too.
    #[arg(long)]
    pub include_crowd: bool,
}

/// Annotations and category table shared by `masks` and `bias`.
pub(crate) fn load_annotations(
    path: &Path,
    categories: Option<&Path>,
    inputs: &mut Vec<FileRecord>,
) -> anyhow::Result<(Vec<AnnotatedImage>, CategoryTable)> {
    let (text, rec) = read_input_text(path)?;
    inputs.push(rec);
    let images = parse_annotations(&text).with_context(|| format!("{}", path.display()))?;
    let table = match categories {
        Some(p) => {
            let (t, rec) = read_input_text(p)?;
            inputs.push(rec);
            CategoryTable::parse(&t).with_context(|| format!("{}", p.display()))?
        }
        None => CategoryTable::coco_default(),
    };
    Ok((images, table))
}

pub(crate) fn scene_for(
    image: &AnnotatedImage,
    table: &CategoryTable,
    options: &SceneOptions,
    source: &Path,
) -> anyhow::Result<Scene> {
    build_scene(image, table, options).with_context(|| format!("{}: image {}", source.display(), image.image_id))
}

pub fn run(g: &Global, a: &MasksArgs) -> CliResult<()> {
    if a.size == 0 {
        return crate::error::usage("--size must be positive");
    }
    let mut inputs = Vec::new();
    let (images, table) = load_annotations(&a.annotations, a.categories.as_deref(), &mut inputs)?;
    let options = SceneOptions { target: (a.size, a.size), include_crowd: a.include_crowd };

    let mut out = Outputs::in_dir(&a.out)?;
    let mut objects = csv_writer();
    objects
        .write_record([
            "image_id",
            "annotation_id",
            "label",
            "category_id",
            "class",
            "area",
            "size_bin",
            "decoded_area",
            "canvas_area",
            "area_flagged",
        ])
        .map_err(anyhow::Error::from)?;
    let mut summary = csv_writer();
    summary
        .write_record(["image_id", "objects", "crowd_skipped", "degenerate_polygons"])
        .map_err(anyhow::Error::from)?;
    let mut entries = Vec::new();

    let work = |img: &AnnotatedImage| -> anyhow::Result<(Scene, Vec<u8>)> {
        let scene = scene_for(img, &table, &options, &a.annotations)?;
        let npy = encode_grid(&scene.canvas.down.to_grid());
        Ok((scene, npy))
    };
    chunked(&images, work, |(scene, npy)| {
        let id = scene.image_id;
        out.write(format!("{id}.npy"), &npy)?;
        for o in &scene.objects {
            objects.write_record([
                id.to_string(),
                o.annotation_id.to_string(),
                o.label.to_string(),
                o.category_id.to_string(),
                serde_tag(&o.class),
                crate::format::fmt9(o.area),
                serde_tag(&o.size_bin),
                o.decoded_area.to_string(),
                o.down_area.to_string(),
                o.area_flagged.to_string(),
            ])?;
        }
        summary.write_record([
            id.to_string(),
            scene.objects.len().to_string(),
            scene.crowd_skipped.to_string(),
            scene.degenerate_polygons.to_string(),
        ])?;
        entries.push(ManifestEntry { image_id: id, tensor_path: format!("{id}.npy").into() });
        Ok(())
    })?;

    out.write("objects.csv", &csv_bytes(objects)?)?;
    out.write("images.csv", &csv_bytes(summary)?)?;
    out.write_json("manifest.json", &TensorManifest { model: "label-canvas".into(), entries })?;
    out.finish(DIR_MANIFEST, "masks", snapshot(g, a)?, seeds(&[]), inputs)?;
    Ok(())
}

/// Serde name of a unit enum variant.
pub(crate) fn serde_tag<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}
