use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

use gaze_align_core::stats::{paired_t, StatReport};

use super::bias::{BiasOutcome, BiasReport};
use super::score::{summary_path, MetricSummary, METRICS, SUMMARY_LABEL};
use super::stats::{StatsOutput, StatsResult};
use super::{csv_bytes, csv_writer, seeds, snapshot};
use crate::format::{fmt9, fmt_opt};
use crate::provenance::{load_manifest_for, read_input, read_input_text, FileRecord, RunManifest, DIR_MANIFEST};
use crate::{CliResult, Global};

pub const REPORT_JSON: &str = "report.json";
pub const ALIGNMENT_CSV: &str = "alignment_metrics.csv";
pub const BIAS_CSV: &str = "bias_effects.csv";
pub const PARITY_CSV: &str = "parity.csv";

/// Manifest settings that must agree across score inputs.
const SCORE_SETTINGS: [&str; 3] = ["kl_direction", "nss_mode", "epsilon"];

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// Score CSVs written by `score`.
    #[arg(long, num_args = 1..)]
    pub scores: Vec<PathBuf>,
    /// Bias JSON reports written by `bias`.
    #[arg(long, num_args = 1..)]
    pub bias: Vec<PathBuf>,
    /// Stats JSON outputs written by `stats --out`.
    #[arg(long, num_args = 1..)]
    pub stats: Vec<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAlignment {
    pub model: String,
    /// Images scored.
    pub n: usize,
    pub metrics: Vec<MetricSummary>,
}

/// One row of `bias_effects.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasEffect {
    pub model: String,
    pub analysis: String,
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: Option<f64>,
    pub delta: Option<f64>,
    pub t: Option<f64>,
    pub df: Option<usize>,
    pub p: Option<f64>,
    pub cohens_d: Option<f64>,
}

impl BiasEffect {
    fn from_test(model: &str, analysis: String, r: &StatReport) -> Self {
        Self {
            model: model.into(),
            analysis,
            n: r.n,
            mean_a: r.mean_a,
            mean_b: Some(r.mean_b),
            delta: Some(r.mean_diff),
            t: Some(r.t),
            df: Some(r.df),
            p: Some(r.p),
            cohens_d: Some(r.cohens_d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParityRow {
    pub benchmark: String,
    pub n: usize,
    pub t: f64,
    pub bf01: Option<f64>,
    pub tier: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool_version: String,
    /// Scoring settings shared by every score input.
    pub score_settings: BTreeMap<String, serde_json::Value>,
    pub alignment: Vec<ModelAlignment>,
    pub bias_effects: Vec<BiasEffect>,
    pub parity: Vec<ParityRow>,
    pub stats: Vec<StatsOutput>,
}

fn mismatch(what: &str, a: &Path, b: &Path, va: &impl std::fmt::Debug, vb: &impl std::fmt::Debug) -> anyhow::Error {
    anyhow!("manifest mismatch: {what} is {va:?} in {} but {vb:?} in {}", a.display(), b.display())
}

/// Loads each input's manifest, requiring one tool version throughout.
fn manifests(files: &[(PathBuf, &str)]) -> anyhow::Result<Vec<RunManifest>> {
    let mut out: Vec<RunManifest> = Vec::with_capacity(files.len());
    for (path, command) in files {
        let m = load_manifest_for(path, command)?;
        if let Some(first) = out.first() {
            if first.tool_version != m.tool_version {
                return Err(mismatch("tool_version", &files[0].0, path, &first.tool_version, &m.tool_version));
            }
        }
        out.push(m);
    }
    Ok(out)
}

/// Image count from a score table, metric aggregates from its summary
/// sidecar, so the report repeats exactly what `score` wrote.
fn read_scores(path: &Path, inputs: &mut Vec<FileRecord>) -> anyhow::Result<(usize, Vec<MetricSummary>)> {
    let (bytes, rec) = read_input(path)?;
    inputs.push(rec);
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let header = reader.headers().with_context(|| format!("{}", path.display()))?.clone();
    let expected: Vec<&str> = std::iter::once("image_id").chain(METRICS).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        bail!("{}: expected columns {expected:?}", path.display());
    }
    let mut n = 0;
    for (line, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("{}: record {}", path.display(), line + 1))?;
        if &row[0] != SUMMARY_LABEL {
            n += 1;
        }
    }

    let side = summary_path(path);
    let (bytes, rec) = read_input(&side)?;
    inputs.push(rec);
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let mut metrics = Vec::new();
    for (line, row) in reader.deserialize::<MetricSummary>().enumerate() {
        metrics.push(row.with_context(|| format!("{}: record {}", side.display(), line + 1))?);
    }
    if !metrics.iter().map(|m| m.metric.as_str()).eq(METRICS) {
        bail!("{}: expected one row per metric, in the order {METRICS:?}", side.display());
    }
    Ok((n, metrics))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, inputs: &mut Vec<FileRecord>) -> anyhow::Result<T> {
    let (text, rec) = read_input_text(path)?;
    inputs.push(rec);
    serde_json::from_str(&text).with_context(|| format!("{}: malformed", path.display()))
}

/// Entropy of each later model against the first, paired on shared images.
fn entropy_effects(entropies: &[(String, BTreeMap<u64, f64>)]) -> anyhow::Result<Vec<BiasEffect>> {
    let mut rows = Vec::new();
    let Some((ref_model, reference)) = entropies.first() else {
        return Ok(rows);
    };
    for (k, (model, values)) in entropies.iter().enumerate() {
        let vals: Vec<f64> = values.values().copied().collect();
        if k == 0 {
            rows.push(BiasEffect {
                model: model.clone(),
                analysis: "entropy".into(),
                n: vals.len(),
                mean_a: vals.iter().sum::<f64>() / vals.len() as f64,
                mean_b: None,
                delta: None,
                t: None,
                df: None,
                p: None,
                cohens_d: None,
            });
            continue;
        }
        let shared: Vec<u64> = values.keys().filter(|k| reference.contains_key(k)).copied().collect();
        let a: Vec<f64> = shared.iter().map(|k| values[k]).collect();
        let b: Vec<f64> = shared.iter().map(|k| reference[k]).collect();
        let analysis = format!("entropy-vs-{ref_model}");
        let r = paired_t(&a, &b).with_context(|| format!("{analysis} for {model}"))?;
        rows.push(BiasEffect::from_test(model, analysis, &r));
    }
    Ok(rows)
}

pub fn run(g: &Global, a: &ReportArgs) -> CliResult<()> {
    if a.scores.is_empty() && a.bias.is_empty() && a.stats.is_empty() {
        return crate::error::usage("give at least one of --scores, --bias, --stats");
    }
    let files: Vec<(PathBuf, &str)> = a
        .scores
        .iter()
        .map(|p| (p.clone(), "score"))
        .chain(a.bias.iter().map(|p| (p.clone(), "bias")))
        .chain(a.stats.iter().map(|p| (p.clone(), "stats")))
        .collect();
    let manifests = manifests(&files)?;
    let tool_version = manifests[0].tool_version.clone();

    let mut score_settings = BTreeMap::new();
    for (k, m) in manifests.iter().take(a.scores.len()).enumerate() {
        for key in SCORE_SETTINGS {
            let v = m.config.get(key).cloned().unwrap_or(serde_json::Value::Null);
            match score_settings.get(key) {
                None => {
                    score_settings.insert(key.to_string(), v);
                }
                Some(first) if *first != v => {
                    return Err(mismatch(key, &a.scores[0], &a.scores[k], first, &v).into());
                }
                Some(_) => {}
            }
        }
    }

    let mut inputs = Vec::new();
    let mut alignment = Vec::new();
    for (path, m) in a.scores.iter().zip(&manifests) {
        let (n, metrics) = read_scores(path, &mut inputs)?;
        let model = m.config.get("model").and_then(|v| v.as_str()).unwrap_or("model").to_string();
        alignment.push(ModelAlignment { model, n, metrics });
    }

    let mut bias_effects = Vec::new();
    let mut entropies = Vec::new();
    for path in &a.bias {
        let report: BiasReport = read_json(path, &mut inputs)?;
        match &report.result {
            BiasOutcome::Animacy(o) => {
                bias_effects.push(BiasEffect::from_test(&report.model, "animacy".into(), &o.test));
            }
            BiasOutcome::Size(o) => {
                bias_effects.push(BiasEffect::from_test(&report.model, "size".into(), &o.test));
            }
            BiasOutcome::Entropy(o) => {
                entropies
                    .push((report.model.clone(), o.records.iter().map(|r| (r.image_id, r.entropy_bits)).collect()));
            }
        }
    }
    bias_effects.extend(entropy_effects(&entropies)?);

    let mut stats = Vec::new();
    let mut parity = Vec::new();
    for path in &a.stats {
        let s: StatsOutput = read_json(path, &mut inputs)?;
        if let StatsResult::Bf01(r) = &s.result {
            parity.push(ParityRow { benchmark: s.label.clone(), n: r.n, t: r.t, bf01: r.bf01, tier: s.tier.clone() });
        }
        stats.push(s);
    }

    let mut out = crate::provenance::Outputs::in_dir(&a.out)?;

    let mut w = csv_writer();
    let mut header = vec!["model".to_string(), "n".to_string()];
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_sem"));
    }
    w.write_record(&header).map_err(anyhow::Error::from)?;
    for row in &alignment {
        let mut rec = vec![row.model.clone(), row.n.to_string()];
        for s in &row.metrics {
            rec.push(fmt9(s.mean));
            rec.push(fmt9(s.sem));
        }
        w.write_record(&rec).map_err(anyhow::Error::from)?;
    }
    out.write(ALIGNMENT_CSV, &csv_bytes(w)?)?;

    let mut w = csv_writer();
    w.write_record(["model", "analysis", "n", "mean_a", "mean_b", "delta", "t", "df", "p", "cohens_d"])
        .map_err(anyhow::Error::from)?;
    for e in &bias_effects {
        w.write_record([
            e.model.clone(),
            e.analysis.clone(),
            e.n.to_string(),
            fmt9(e.mean_a),
            fmt_opt(e.mean_b),
            fmt_opt(e.delta),
            fmt_opt(e.t),
            e.df.map(|d| d.to_string()).unwrap_or_default(),
            fmt_opt(e.p),
            fmt_opt(e.cohens_d),
        ])
        .map_err(anyhow::Error::from)?;
    }
    out.write(BIAS_CSV, &csv_bytes(w)?)?;

    let mut w = csv_writer();
    w.write_record(["benchmark", "n", "t", "bf01", "tier"]).map_err(anyhow::Error::from)?;
    for p in &parity {
        w.write_record([
            p.benchmark.clone(),
            p.n.to_string(),
            fmt9(p.t),
            fmt_opt(p.bf01),
            p.tier.clone().unwrap_or_default(),
        ])
        .map_err(anyhow::Error::from)?;
    }
    out.write(PARITY_CSV, &csv_bytes(w)?)?;

    let report = Report { tool_version, score_settings, alignment, bias_effects, parity, stats };
    out.write_json(REPORT_JSON, &report)?;
    out.finish(DIR_MANIFEST, "report", snapshot(g, a)?, seeds(&[]), inputs)?;
    Ok(())
}
