use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use gaze_align_core::tensor_io::{npy, NpyTensor, TensorData};
use gaze_align_trainer::data::synthetic_blobs;
use gaze_align_trainer::train::DEFAULT_SHUFFLE_SEED;
use gaze_align_trainer::{
    train, AdamWConfig, ControlMode, LossConfig, ParamKind, ParamSet, ParamTensor, Sample, TinyViTConfig, TrainConfig,
};

use super::{csv_bytes, csv_writer, seeds, snapshot};
use crate::format::{fmt9, fmt_opt};
use crate::maps::scan_map_dir;
use crate::provenance::{read_input, FileRecord, Outputs, DIR_MANIFEST};
use crate::{CliResult, Global};

pub const CHECKPOINT_CONFIG: &str = "config.json";
pub const PARAMS_DIR: &str = "params";
pub const HISTORY: &str = "history.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Aligned,
    Shuffled,
}

impl From<ModeArg> for ControlMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Aligned => ControlMode::Aligned,
            ModeArg::Shuffled => ControlMode::Shuffled,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    /// Dataset directory holding `images/<id>.npy` (C×S×S) and
    /// `targets/<id>.npy` (S×S).
    #[arg(long, required_unless_present = "synthetic", conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Train on this many seeded synthetic blob images instead.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Seed of the synthetic dataset.
    #[arg(long, default_value_t = 2024)]
    pub data_seed: u64,
    /// `shuffled` trains against deranged targets as a control.
    #[arg(long, value_enum, default_value_t = ModeArg::Aligned)]
    pub mode: ModeArg,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Steps between validations (default: min(200, steps per epoch)).
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub min_delta: f64,
    /// Fraction of items (the highest ids) held out for validation.
    #[arg(long, default_value_t = 0.25)]
    pub val_fraction: f64,
    /// Seed of the target derangement in shuffled mode.
    #[arg(long, default_value_t = DEFAULT_SHUFFLE_SEED)]
    pub shuffle_seed: u64,
    /// Image side for synthetic data.
    #[arg(long, default_value_t = 32)]
    pub image_size: usize,
    #[arg(long, default_value_t = 8)]
    pub patch_size: usize,
    #[arg(long, default_value_t = 32)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 64)]
    pub mlp_dim: usize,
    /// Train only the Q/K/V/output weights, not their biases.
    #[arg(long)]
    pub freeze_attention_biases: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub file: PathBuf,
}

/// `config.json` of a checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub model: TinyViTConfig,
    pub train: TrainConfig,
    pub mode: ControlMode,
    pub tensors: Vec<TensorEntry>,
    pub total_parameters: usize,
    pub trainable_parameters: usize,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub steps_run: usize,
    pub stopped_early: bool,
    pub train_ids: Vec<u64>,
    pub val_ids: Vec<u64>,
    /// Target index paired with each train / validation item.
    pub train_pairing: Vec<usize>,
    pub val_pairing: Vec<usize>,
}

/// Reads a checkpoint written by `tune` back into a parameter set.
pub fn load_checkpoint(dir: &Path) -> anyhow::Result<(CheckpointConfig, ParamSet)> {
    let path = dir.join(CHECKPOINT_CONFIG);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: CheckpointConfig = serde_json::from_str(&text).with_context(|| format!("{}", path.display()))?;
    let mut tensors = Vec::with_capacity(cfg.tensors.len());
    for t in &cfg.tensors {
        let p = dir.join(&t.file);
        let raw = npy::read_tensor_file(&p).with_context(|| format!("{}", p.display()))?;
        if raw.shape() != t.shape.as_slice() {
            bail!("{}: shape {:?}, config says {:?}", p.display(), raw.shape(), t.shape);
        }
        tensors.push(ParamTensor {
            name: t.name.clone(),
            kind: t.kind,
            shape: t.shape.clone(),
            data: raw.data().to_f64(),
        });
    }
    let params = ParamSet::from_tensors(cfg.model, tensors).with_context(|| format!("{}", dir.display()))?;
    Ok((cfg, params))
}

fn load_dataset(dir: &Path, inputs: &mut Vec<FileRecord>) -> anyhow::Result<(Vec<u64>, Vec<Sample>, usize, usize)> {
    let images = scan_map_dir(&dir.join("images"))?;
    let targets = scan_map_dir(&dir.join("targets"))?;
    if let Some(id) =
        images.keys().find(|k| !targets.contains_key(k)).or_else(|| targets.keys().find(|k| !images.contains_key(k)))
    {
        bail!("{}: image {id} lacks its image or its target", dir.display());
    }
    let mut geometry: Option<(usize, usize)> = None;
    let mut samples = Vec::with_capacity(images.len());
    for (id, ipath) in &images {
        let (bytes, rec) = read_input(ipath)?;
        inputs.push(rec);
        let t = npy::decode(&bytes).with_context(|| format!("{}", ipath.display()))?;
        let &[c, h, w] = t.shape() else {
            bail!("{}: image {id} must be C×S×S, got shape {:?}", ipath.display(), t.shape());
        };
        if h != w || geometry.is_some_and(|g| g != (c, h)) {
            bail!("{}: image {id} has shape {:?}; all images must share one square shape", ipath.display(), t.shape());
        }
        geometry = Some((c, h));
        let tpath = &targets[id];
        let (bytes, rec) = read_input(tpath)?;
        inputs.push(rec);
        let target = npy::decode(&bytes).and_then(|t| t.to_grid()).with_context(|| format!("{}", tpath.display()))?;
        if target.dims() != (h, h) {
            bail!("{}: target {id} is {:?}, image is {h}×{h}", tpath.display(), target.dims());
        }
        samples.push(Sample { image: t.data().to_f64(), target });
    }
    let (channels, size) = geometry.ok_or_else(|| anyhow!("{}: empty dataset", dir.display()))?;
    Ok((images.keys().copied().collect(), samples, channels, size))
}

fn tensor_bytes(t: &ParamTensor) -> anyhow::Result<Vec<u8>> {
    let tensor = NpyTensor::new(t.shape.clone(), TensorData::F64(t.data.clone()))?;
    Ok(npy::encode(&tensor))
}

pub fn run(g: &Global, a: &TuneArgs) -> CliResult<()> {
    if !(a.val_fraction > 0.0 && a.val_fraction < 1.0) {
        return crate::error::usage("--val-fraction must lie strictly between 0 and 1");
    }
    if a.batch_size == 0 {
        return crate::error::usage("--batch-size must be positive");
    }
    let mut inputs = Vec::new();
    let mut model = TinyViTConfig {
        image_size: a.image_size,
        patch_size: a.patch_size,
        channels: 3,
        embed_dim: a.embed_dim,
        layers: a.layers,
        heads: a.heads,
        mlp_dim: a.mlp_dim,
        seed: g.seed,
        train_attention_biases: !a.freeze_attention_biases,
    };
    let (ids, samples) = match (&a.data, a.synthetic) {
        (Some(dir), _) => {
            let (ids, samples, channels, size) = load_dataset(dir, &mut inputs)?;
            model.channels = channels;
            model.image_size = size;
            (ids, samples)
        }
        (None, Some(n)) => {
            model.validate().map_err(|e| crate::CliError::Usage(e.to_string()))?;
            ((0..n as u64).collect(), synthetic_blobs(&model, n, a.data_seed).map_err(anyhow::Error::from)?)
        }
        (None, None) => return crate::error::usage("one of --data or --synthetic is required"),
    };
    model.validate().map_err(|e| anyhow!("model configuration: {e}"))?;
    let n = samples.len();
    if n < 2 {
        return Err(anyhow!("need at least two items to split into train and validation, got {n}").into());
    }
    let n_val = ((n as f64 * a.val_fraction).ceil() as usize).clamp(1, n - 1);
    let (train_set, val_set) = samples.split_at(n - n_val);

    let cfg = TrainConfig {
        optimizer: AdamWConfig { learning_rate: a.lr, weight_decay: a.weight_decay, ..AdamWConfig::default() },
        loss: LossConfig { lambda: g.lambda, kl_direction: g.kl_direction.into(), ..LossConfig::default() },
        batch_size: a.batch_size,
        epochs: a.epochs,
        max_steps: a.max_steps,
        eval_interval: a.eval_interval,
        patience: a.patience,
        min_delta: a.min_delta,
        seed: g.seed,
        shuffle_seed: a.shuffle_seed,
    };
    let initial = ParamSet::init(model).map_err(anyhow::Error::from)?;
    let outcome = train(&initial, train_set, val_set, &cfg, a.mode.into()).map_err(anyhow::Error::from)?;

    let mut out = Outputs::in_dir(&a.out)?;
    let mut entries = Vec::new();
    for t in &outcome.params.tensors {
        let file = PathBuf::from(PARAMS_DIR).join(format!("{}.npy", t.name));
        out.write(&file, &tensor_bytes(t)?)?;
        entries.push(TensorEntry { name: t.name.clone(), kind: t.kind, shape: t.shape.clone(), file });
    }
    let mut history = csv_writer();
    history
        .write_record(["step", "train_loss", "val_loss", "L_distill", "L_KL", "val_cc", "epoch"])
        .map_err(anyhow::Error::from)?;
    for r in &outcome.history {
        history
            .write_record([
                r.step.to_string(),
                fmt_opt(r.train_loss),
                fmt9(r.val_loss),
                fmt9(r.val_distill),
                fmt9(r.val_kl),
                fmt9(r.val_cc),
                r.epoch.to_string(),
            ])
            .map_err(anyhow::Error::from)?;
    }
    out.write(HISTORY, &csv_bytes(history)?)?;
    let split = n - n_val;
    let config = CheckpointConfig {
        model,
        train: cfg,
        mode: a.mode.into(),
        tensors: entries,
        total_parameters: outcome.params.parameter_count(),
        trainable_parameters: outcome.params.trainable_count(),
        best_step: outcome.best_step,
        best_val_loss: outcome.best_val_loss,
        steps_run: outcome.steps_run,
        stopped_early: outcome.stopped_early,
        train_ids: ids[..split].to_vec(),
        val_ids: ids[split..].to_vec(),
        train_pairing: outcome.train_pairing.clone(),
        val_pairing: outcome.val_pairing.clone(),
    };
    out.write_json(CHECKPOINT_CONFIG, &config)?;
    let seeds = seeds(&[
        ("model_init", g.seed),
        ("batch_order", g.seed),
        ("shuffle", a.shuffle_seed),
        ("synthetic_data", a.data_seed),
    ]);
    out.finish(DIR_MANIFEST, "tune", snapshot(g, a)?, seeds, inputs)?;
    Ok(())
}
