use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use gaze_align_core::stats::{jeffreys_tier, paired_t, parity_test, pearson_r, PearsonResult, StatReport};

use super::{file_name, file_output, seeds, snapshot};
use crate::provenance::{manifest_beside, read_input_text, to_json_bytes, FileRecord};
use crate::{CliResult, Global};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestKind {
    PairedT,
    Bf01,
    Pearson,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    /// One CSV with columns (image_id, a, b), or two CSVs with columns
    /// (image_id, value) joined on image_id.
    #[arg(long, num_args = 1..=2, required = true)]
    pub pairs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub test: TestKind,
    /// Output JSON (default: standard output, without a run manifest).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Label carried into reports, e.g. the benchmark name.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", content = "result", rename_all = "kebab-case")]
pub enum StatsResult {
    PairedT(StatReport),
    Bf01(StatReport),
    Pearson(PearsonResult),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsOutput {
    pub label: String,
    /// Column names of the two paired series.
    pub columns: [String; 2],
    pub n: usize,
    #[serde(flatten)]
    pub result: StatsResult,
    /// Evidence tier of BF₀₁ (Bayes-factor test only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<String>,
}

type Series = BTreeMap<u64, f64>;

fn parse_value(s: &str, path: &Path, line: u64, column: &str) -> anyhow::Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| anyhow!("{}: record {line}: column {column}: not a number: {s:?}", path.display()))?;
    if !v.is_finite() {
        bail!("{}: record {line}: column {column}: non-finite value", path.display());
    }
    Ok(v)
}

/// Reads `image_id` plus `columns` numeric columns (by position).
fn read_columns(
    path: &Path,
    columns: usize,
    inputs: &mut Vec<FileRecord>,
) -> anyhow::Result<(Vec<String>, Vec<Series>)> {
    let (text, rec) = read_input_text(path)?;
    inputs.push(rec);
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().with_context(|| format!("{}: header", path.display()))?.clone();
    if headers.len() < columns + 1 {
        bail!(
            "{}: expected image_id and {columns} value column(s), header has {} field(s)",
            path.display(),
            headers.len()
        );
    }
    let names: Vec<String> = headers.iter().skip(1).take(columns).map(str::to_owned).collect();
    let mut series = vec![Series::new(); columns];
    for (k, row) in reader.records().enumerate() {
        let line = k as u64 + 1;
        let row = row.with_context(|| format!("{}: record {line}", path.display()))?;
        let id: u64 = row[0]
            .parse()
            .map_err(|_| anyhow!("{}: record {line}: image_id {:?} is not an integer", path.display(), &row[0]))?;
        for c in 0..columns {
            let v = parse_value(row.get(c + 1).unwrap_or(""), path, line, &names[c])?;
            if series[c].insert(id, v).is_some() {
                bail!("{}: record {line}: image_id {id} appears twice", path.display());
            }
        }
    }
    Ok((names, series))
}

/// Paired series ordered by image id.
pub fn load_pairs(
    paths: &[PathBuf],
    inputs: &mut Vec<FileRecord>,
) -> anyhow::Result<([String; 2], Vec<f64>, Vec<f64>)> {
    let (names, a, b) = match paths {
        [one] => {
            let (names, mut s) = read_columns(one, 2, inputs)?;
            let b = s.pop().unwrap();
            let a = s.pop().unwrap();
            ([names[0].clone(), names[1].clone()], a, b)
        }
        [first, second] => {
            let (na, mut sa) = read_columns(first, 1, inputs)?;
            let (nb, mut sb) = read_columns(second, 1, inputs)?;
            let (a, b) = (sa.pop().unwrap(), sb.pop().unwrap());
            if let Some(id) = a.keys().find(|k| !b.contains_key(k)).or_else(|| b.keys().find(|k| !a.contains_key(k))) {
                bail!("image_id {id} is present in only one of {} and {}", first.display(), second.display());
            }
            ([na[0].clone(), nb[0].clone()], a, b)
        }
        _ => bail!("--pairs takes one or two files"),
    };
    Ok((names, a.into_values().collect(), b.into_values().collect()))
}

pub fn run(g: &Global, a: &StatsArgs) -> CliResult<()> {
    let mut inputs = Vec::new();
    let (columns, x, y) = load_pairs(&a.pairs, &mut inputs)?;
    let result = match a.test {
        TestKind::PairedT => StatsResult::PairedT(paired_t(&x, &y).context("paired t-test")?),
        TestKind::Bf01 => StatsResult::Bf01(parity_test(&x, &y, g.bf_scale).context("Bayes factor")?),
        TestKind::Pearson => StatsResult::Pearson(pearson_r(&x, &y).context("Pearson correlation")?),
    };
    let tier = match &result {
        StatsResult::Bf01(r) => r.bf01.map(|b| jeffreys_tier(b).label().to_string()),
        _ => None,
    };
    let label = a
        .label
        .clone()
        .unwrap_or_else(|| a.pairs[0].file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    let output = StatsOutput { label, columns, n: x.len(), result, tier };
    let bytes = to_json_bytes(&output)?;
    match &a.out {
        None => {
            std::io::stdout().write_all(&bytes).context("writing to stdout")?;
        }
        Some(path) => {
            let (mut out, name) = file_output(path)?;
            out.write(&name, &bytes)?;
            let seeds = seeds(&[]);
            let mut config = snapshot(g, a)?;
            config["label"] = output.label.clone().into();
            out.finish(file_name(&manifest_beside(path)), "stats", config, seeds, inputs)?;
        }
    }
    Ok(())
}
