//! Batch workflows behind the `gaze-align` binary: density maps, rollout,
//! scoring, mask canvases, bias analyses, parity statistics, fine-tuning and
//! consolidated reports. Every run writes a [`provenance::RunManifest`]
//! beside its outputs.

pub mod commands;
pub mod error;
pub mod format;
pub mod maps;
pub mod provenance;

use std::ffi::OsString;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gaze_align_core::metrics::KlDirection;

pub use error::{CliError, CliResult, EXIT_DATA, EXIT_OK, EXIT_USAGE};

/// Images handled per parallel batch; outputs are flushed in id order
/// between batches.
pub const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirectionArg {
    ModelToHuman,
    HumanToModel,
}

impl From<KlDirectionArg> for KlDirection {
    fn from(d: KlDirectionArg) -> Self {
        match d {
            KlDirectionArg::ModelToHuman => KlDirection::ModelToHuman,
            KlDirectionArg::HumanToModel => KlDirection::HumanToModel,
        }
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a positive number, got {s:?}")),
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("expected a non-negative number, got {s:?}")),
    }
}

/// Settings shared by all subcommands.
#[derive(Debug, Clone, clap::Args, Serialize)]
pub struct Global {
    /// Worker threads (default: all cores). Never changes any output.
    #[arg(long, global = true, env = "GAZE_ALIGN_JOBS", value_parser = clap::value_parser!(u64).range(1..))]
    #[serde(skip)]
    pub jobs: Option<u64>,
    /// Seed for model initialisation and batch order.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// KL direction in `score`; model-to-human is `Σ p_model ln(p_model / p_human)`.
    #[arg(long, global = true, value_enum, default_value_t = KlDirectionArg::ModelToHuman)]
    pub kl_direction: KlDirectionArg,
    /// Gaussian σ in pixels at the target resolution.
    #[arg(long, global = true, default_value_t = gaze_align_core::fixation::DEFAULT_SIGMA, value_parser = positive)]
    pub sigma: f64,
    /// Weight of the KL term in the fine-tuning loss.
    #[arg(long, global = true, default_value_t = 1.0, value_parser = non_negative)]
    pub lambda: f64,
    /// Cauchy prior scale of the JZS Bayes factor.
    #[arg(long, global = true, default_value_t = gaze_align_core::stats::DEFAULT_BF_SCALE, value_parser = positive)]
    pub bf_scale: f64,
}

#[derive(Debug, Parser)]
#[command(name = "gaze-align", version, about = "Human-gaze alignment analyses for vision transformers")]
#[command(arg_required_else_help = true, propagate_version = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fixation density maps from per-observer fixation records.
    Density(commands::density::DensityArgs),
    /// Attention-rollout maps from per-image attention tensors.
    Rollout(commands::rollout::RolloutArgs),
    /// CC, NSS, AUC-Judd, KL and SIM of model maps against human data.
    Score(commands::score::ScoreArgs),
    /// Painter's-algorithm label canvases from instance annotations.
    Masks(commands::masks::MasksArgs),
    /// Animacy, object-size or entropy analysis of a set of maps.
    Bias(commands::bias::BiasArgs),
    /// Paired t-test, JZS Bayes factor or Pearson correlation on paired values.
    Stats(commands::stats::StatsArgs),
    /// Fine-tune the attention projections of a small ViT on image/target pairs.
    Tune(commands::tune::TuneArgs),
    /// Consolidate score, bias and stats outputs into summary tables.
    Report(commands::report::ReportArgs),
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code. Diagnostics go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("gaze-align: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.global.jobs {
        pool = pool.num_threads(n as usize);
    }
    let pool = pool.build().map_err(|e| CliError::Data(e.into()))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Density(a) => commands::density::run(g, a),
        Command::Rollout(a) => commands::rollout::run(g, a),
        Command::Score(a) => commands::score::run(g, a),
        Command::Masks(a) => commands::masks::run(g, a),
        Command::Bias(a) => commands::bias::run(g, a),
        Command::Stats(a) => commands::stats::run(g, a),
        Command::Tune(a) => commands::tune::run(g, a),
        Command::Report(a) => commands::report::run(g, a),
    }
}
