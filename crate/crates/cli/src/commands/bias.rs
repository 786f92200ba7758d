use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use gaze_align_core::bias::{
    animacy_record, entropy_bits, size_record, summarise_animacy, summarise_entropy, summarise_size, AnimacyOutcome,
    EntropyOutcome, EntropyRecord, SizeOutcome,
};
use gaze_align_core::error::Error as CoreError;
use gaze_align_core::masks::SceneOptions;
use gaze_align_core::tensor_io::AnnotatedImage;

use super::masks::{load_annotations, scene_for};
use super::{chunked, dir_label, file_name, file_output, seeds, snapshot};
use crate::maps::{read_grid, scan_map_dir};
use crate::provenance::{manifest_beside, to_json_bytes, FileRecord};
use crate::{CliResult, Global};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Animacy,
    Size,
    Entropy,
}

#[derive(Debug, Args, Serialize)]
pub struct BiasArgs {
    /// Directory of attention or density maps, `<image_id>.npy`.
    #[arg(long)]
    pub maps: PathBuf,
    /// COCO-style instance annotations (optional for `entropy`, where they
    /// only supply object counts).
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub which: Analysis,
    /// Output JSON report.
    #[arg(long)]
    pub out: PathBuf,
    /// Model label carried into reports (default: the map directory name).
    #[arg(long)]
    pub model: Option<String>,
    /// Replacement animate/inanimate/excluded category table.
    #[arg(long)]
    pub categories: Option<PathBuf>,
    /// Count crowd annotations too.
    #[arg(long)]
    pub include_crowd: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "which", content = "outcome", rename_all = "kebab-case")]
pub enum BiasOutcome {
    Animacy(AnimacyOutcome),
    Size(SizeOutcome),
    Entropy(EntropyOutcome),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub model: String,
    pub maps: usize,
    /// Maps with no annotation record; never analysed for animacy or size.
    pub without_annotations: usize,
    /// Maps with no positive mass (entropy only).
    pub empty_maps: usize,
    #[serde(flatten)]
    pub result: BiasOutcome,
}

enum PerImage {
    Animacy(gaze_align_core::bias::AnimacyDecision),
    Size(Option<gaze_align_core::bias::SizeRecord>),
    Entropy(Option<EntropyRecord>),
}

pub fn run(g: &Global, a: &BiasArgs) -> CliResult<()> {
    if a.which != Analysis::Entropy && a.annotations.is_none() {
        return crate::error::usage("--annotations is required for animacy and size");
    }
    let maps = scan_map_dir(&a.maps)?;
    let mut inputs: Vec<FileRecord> = Vec::new();
    let (images, table) = match &a.annotations {
        Some(p) => {
            let (imgs, t) = load_annotations(p, a.categories.as_deref(), &mut inputs)?;
            (imgs.into_iter().map(|i| (i.image_id, i)).collect::<BTreeMap<u64, AnnotatedImage>>(), Some(t))
        }
        None => (BTreeMap::new(), None),
    };

    let jobs: Vec<(u64, &PathBuf, Option<&AnnotatedImage>)> =
        maps.iter().map(|(id, p)| (*id, p, images.get(id))).collect();
    let without_annotations = jobs.iter().filter(|j| j.2.is_none()).count();
    let source = a.annotations.clone().unwrap_or_default();

    let work = |(id, path, image): &(u64, &PathBuf, Option<&AnnotatedImage>)| -> anyhow::Result<(Option<PerImage>, FileRecord)> {
        let (map, rec) = read_grid(path)?;
        let scene = |img: &AnnotatedImage| {
            let options = SceneOptions { target: map.dims(), include_crowd: a.include_crowd };
            scene_for(img, table.as_ref().expect("annotations loaded"), &options, &source)
        };
        let ctx = || format!("{}: image {id}", path.display());
        let result = match (a.which, image) {
            (Analysis::Entropy, img) => {
                let objects = img.map(|i| i.annotations.iter().filter(|x| a.include_crowd || !x.iscrowd).count());
                match entropy_bits(&map) {
                    Ok(h) => Some(PerImage::Entropy(Some(EntropyRecord { image_id: *id, entropy_bits: h, objects }))),
                    Err(CoreError::ConstantMap(_)) => Some(PerImage::Entropy(None)),
                    Err(e) => return Err(anyhow::Error::from(e).context(ctx())),
                }
            }
            (_, None) => None,
            (Analysis::Animacy, Some(img)) => Some(PerImage::Animacy(animacy_record(&map, &scene(img)?).with_context(ctx)?)),
            (Analysis::Size, Some(img)) => Some(PerImage::Size(size_record(&map, &scene(img)?).with_context(ctx)?)),
        };
        Ok((result, rec))
    };

    let mut per_image = Vec::new();
    chunked(&jobs, work, |(r, rec)| {
        inputs.push(rec);
        per_image.extend(r);
        Ok(())
    })?;

    let mut empty_maps = 0;
    let result = match a.which {
        Analysis::Animacy => BiasOutcome::Animacy(
            summarise_animacy(per_image.into_iter().filter_map(|p| match p {
                PerImage::Animacy(d) => Some(d),
                _ => None,
            }))
            .context("animacy analysis")?,
        ),
        Analysis::Size => BiasOutcome::Size(
            summarise_size(per_image.into_iter().filter_map(|p| match p {
                PerImage::Size(r) => Some(r),
                _ => None,
            }))
            .context("size analysis")?,
        ),
        Analysis::Entropy => {
            let mut records = Vec::new();
            for p in per_image {
                match p {
                    PerImage::Entropy(Some(r)) => records.push(r),
                    PerImage::Entropy(None) => empty_maps += 1,
                    _ => {}
                }
            }
            BiasOutcome::Entropy(summarise_entropy(records).context("entropy analysis")?)
        }
    };
    let report = BiasReport {
        model: a.model.clone().unwrap_or_else(|| dir_label(&a.maps)),
        maps: maps.len(),
        without_annotations,
        empty_maps,
        result,
    };

    let (mut out, name) = file_output(&a.out)?;
    out.write(&name, &to_json_bytes(&report)?)?;
    let mut config = snapshot(g, a)?;
    config["model"] = report.model.clone().into();
    out.finish(file_name(&manifest_beside(&a.out)), "bias", config, seeds(&[]), inputs)?;
    Ok(())
}
