use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use gaze_align_core::error::Error as CoreError;
use gaze_align_core::fixation::PROBABILITY_EPSILON;
use gaze_align_core::metrics::{auc_judd, cc, kl, nss, sim, KlDirection, NssMode};
use gaze_align_core::stats::{mean, sample_sd};
use gaze_align_core::tensor_io::{parse_fixations, FixationSet};

use super::{chunked, csv_bytes, csv_writer, dir_label, file_name, file_output, seeds, snapshot};
use crate::format::fmt9;
use crate::maps::{read_grid, scan_map_dir};
use crate::provenance::{manifest_beside, read_input_text, FileRecord};
use crate::{CliResult, Global};

/// Column order of the per-image score table.
pub const METRICS: [&str; 5] = ["cc", "nss", "auc_judd", "kl_nats", "sim"];
pub const SUMMARY_LABEL: &str = "summary";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NssModeArg {
    Pooled,
    PerObserver,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    /// Directory of model maps, `<image_id>.npy`.
    #[arg(long)]
    pub model_maps: PathBuf,
    /// Directory of human density maps, `<image_id>.npy`.
    #[arg(long)]
    pub human_maps: PathBuf,
    /// Fixation JSON used for NSS and AUC-Judd.
    #[arg(long)]
    pub fixations: PathBuf,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Model label carried into reports (default: the model-map directory name).
    #[arg(long)]
    pub model: Option<String>,
    /// Pool all observers' fixations, or average NSS over observers.
    #[arg(long, value_enum, default_value_t = NssModeArg::Pooled)]
    pub nss_mode: NssModeArg,
}

/// Per-metric aggregate written to the summary sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    /// Images where the metric is defined.
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub sem: f64,
}

pub fn summarise(metric: &str, values: &[f64]) -> MetricSummary {
    let defined: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let n = defined.len();
    let (m, sd) = match n {
        0 => (f64::NAN, f64::NAN),
        1 => (defined[0], f64::NAN),
        _ => (mean(&defined), sample_sd(&defined)),
    };
    MetricSummary { metric: metric.into(), n, mean: m, sd, sem: sd / (n as f64).sqrt() }
}

/// Sidecar holding the summary rows and the settings that make scores
/// comparable across models.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

/// A metric that is undefined for this image (constant map, no
/// non-fixated pixel) is recorded as NaN; anything else is an error.
fn defined(r: gaze_align_core::Result<f64>) -> gaze_align_core::Result<f64> {
    match r {
        Err(CoreError::ConstantMap(_)) | Err(CoreError::InvalidArgument(_)) => Ok(f64::NAN),
        other => other,
    }
}

pub fn run(g: &Global, a: &ScoreArgs) -> CliResult<()> {
    let model_maps = scan_map_dir(&a.model_maps)?;
    let human_maps = scan_map_dir(&a.human_maps)?;
    let (first, _) = read_grid(model_maps.values().next().expect("scan returns at least one map"))?;
    let dims = first.dims();

    let (text, fix_input) = read_input_text(&a.fixations)?;
    let fixations: BTreeMap<u64, FixationSet> = parse_fixations(&text, dims)
        .with_context(|| format!("{}", a.fixations.display()))?
        .into_iter()
        .map(|s| (s.image_id, s))
        .collect();

    let mut jobs = Vec::new();
    for (&id, model_path) in &model_maps {
        let human =
            human_maps.get(&id).ok_or_else(|| anyhow!("image {id}: no human map in {}", a.human_maps.display()))?;
        let fix =
            fixations.get(&id).ok_or_else(|| anyhow!("image {id}: no fixation record in {}", a.fixations.display()))?;
        jobs.push((id, model_path.clone(), human.clone(), fix));
    }

    let direction: KlDirection = g.kl_direction.into();
    let nss_mode = match a.nss_mode {
        NssModeArg::Pooled => NssMode::Pooled,
        NssModeArg::PerObserver => NssMode::PerObserver,
    };
    let work = |(id, mp, hp, fix): &(u64, PathBuf, PathBuf, &FixationSet)| -> anyhow::Result<([f64; 5], FileRecord, FileRecord)> {
        let (m, mrec) = read_grid(mp)?;
        let (h, hrec) = read_grid(hp)?;
        if m.dims() != dims || h.dims() != dims {
            bail!("image {id}: map sizes {:?} (model) and {:?} (human) differ from {dims:?}", m.dims(), h.dims());
        }
        let panel = (|| -> gaze_align_core::Result<[f64; 5]> {
            Ok([
                defined(cc(&m, &h))?,
                defined(nss(&m, fix, nss_mode))?,
                defined(auc_judd(&m, fix))?,
                kl(&m, &h, PROBABILITY_EPSILON, direction)?,
                sim(&m, &h, PROBABILITY_EPSILON)?,
            ])
        })()
        .with_context(|| format!("image {id}"))?;
        Ok((panel, mrec, hrec))
    };

    let mut rows = Vec::new();
    let mut inputs = vec![fix_input];
    chunked(&jobs, work, |(panel, mrec, hrec)| {
        rows.push(panel);
        inputs.push(mrec);
        inputs.push(hrec);
        Ok(())
    })?;

    let mut table = csv_writer();
    let mut header = vec!["image_id"];
    header.extend(METRICS);
    table.write_record(&header).map_err(anyhow::Error::from)?;
    for ((id, ..), panel) in jobs.iter().zip(&rows) {
        let mut rec = vec![id.to_string()];
        rec.extend(panel.iter().map(|&v| fmt9(v)));
        table.write_record(&rec).map_err(anyhow::Error::from)?;
    }
    let summaries: Vec<MetricSummary> = METRICS
        .iter()
        .enumerate()
        .map(|(k, name)| summarise(name, &rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect();
    let mut rec = vec![SUMMARY_LABEL.to_string()];
    rec.extend(summaries.iter().map(|s| format!("{}±{}", fmt9(s.mean), fmt9(s.sd))));
    table.write_record(&rec).map_err(anyhow::Error::from)?;

    let mut side = csv_writer();
    side.write_record(["metric", "n", "mean", "sd", "sem"]).map_err(anyhow::Error::from)?;
    for s in &summaries {
        side.write_record([s.metric.clone(), s.n.to_string(), fmt9(s.mean), fmt9(s.sd), fmt9(s.sem)])
            .map_err(anyhow::Error::from)?;
    }

    let (mut out, name) = file_output(&a.out)?;
    out.write(&name, &csv_bytes(table)?)?;
    out.write(file_name(&summary_path(&a.out)), &csv_bytes(side)?)?;
    let model = a.model.clone().unwrap_or_else(|| dir_label(&a.model_maps));
    let mut config = snapshot(g, a)?;
    config["model"] = model.into();
    config["kl_direction"] = serde_json::to_value(direction).map_err(anyhow::Error::from)?;
    config["nss_mode"] = serde_json::to_value(nss_mode).map_err(anyhow::Error::from)?;
    config["epsilon"] = PROBABILITY_EPSILON.into();
    out.finish(file_name(&manifest_beside(&a.out)), "score", config, seeds(&[]), inputs)?;
    Ok(())
}
