//! Mini-batch training loop with periodic validation, early stopping and
//! best-checkpoint restore.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use gaze_align_core::metrics::cc;
use gaze_align_core::Grid2D;

use crate::error::{Result, TrainError};
use crate::loss::{composite_loss, loss_from_forward, rollout_map, target_probability, LossConfig, LossTerms};
use crate::model::{forward_f64, ParamSet};
use crate::optim::{AdamW, AdamWConfig};
use crate::tape::Tape;

pub const DEFAULT_SHUFFLE_SEED: u64 = 42;
pub const DEFAULT_EVAL_INTERVAL: usize = 200;

#[derive(Debug, Clone)]
pub struct Sample {
    /// Channel-major `[c][y][x]` pixel values.
    pub image: Vec<f64>,
    /// Target density at image resolution.
    pub target: Grid2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ControlMode {
    #[default]
    Aligned,
    /// Every image is paired with another image's target.
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub optimizer: AdamWConfig,
    pub loss: LossConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_steps: Option<usize>,
    /// `None` means `min(200, steps per epoch)`.
    pub eval_interval: Option<usize>,
    pub patience: usize,
    pub min_delta: f64,
    /// Seeds the per-epoch batch order.
    pub seed: u64,
    /// Seeds the target derangement in shuffled mode.
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: AdamWConfig::default(),
            loss: LossConfig::default(),
            batch_size: 8,
            epochs: 20,
            max_steps: None,
            eval_interval: None,
            patience: 3,
            min_delta: 1e-3,
            seed: 0,
            shuffle_seed: DEFAULT_SHUFFLE_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub epoch: usize,
    /// Mean batch loss since the previous evaluation; absent at step 0.
    pub train_loss: Option<f64>,
    pub val_loss: f64,
    pub val_distill: f64,
    pub val_kl: f64,
    pub val_cc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub loss: f64,
    pub distill: f64,
    pub kl: f64,
    /// Mean correlation between rollout map and target.
    pub cc: f64,
}

/// Random permutation without fixed points, by reject-and-retry.
pub fn derangement(n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(TrainError::TooFewItems { needed: 2, found: n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.sort_unstable();
        perm.shuffle(rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

/// Pairings used in shuffled mode: train first, then validation, from one
/// generator seeded with `seed`.
pub fn shuffled_pairings(n_train: usize, n_val: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = derangement(n_train, &mut rng)?;
    let val = derangement(n_val, &mut rng)?;
    Ok((train, val))
}

struct Prepared {
    image: Vec<f64>,
    target: Grid2D,
    target_prob: Vec<f64>,
    teacher_cls: Vec<f64>,
}

fn prepare(
    samples: &[Sample],
    targets_from: Option<&[usize]>,
    teacher: &ParamSet,
    loss: &LossConfig,
) -> Result<Vec<Prepared>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let target = match targets_from {
                Some(perm) => &samples[perm[i]].target,
                None => &s.target,
            };
            Ok(Prepared {
                image: s.image.clone(),
                target: target.clone(),
                target_prob: target_probability(&teacher.config, target, loss.epsilon)?,
                teacher_cls: forward_f64(teacher, &s.image)?.cls,
            })
        })
        .collect()
}

/// Loss and gradients of every trainable tensor (in
/// [`ParamSet::trainable_indices`] order) for one image.
pub fn loss_and_gradients(
    params: &ParamSet,
    teacher_cls: &[f64],
    image: &[f64],
    target_prob: &[f64],
    loss: &LossConfig,
) -> Result<(LossTerms<f64>, Vec<Vec<f64>>)> {
    let tape = Tape::with_capacity(1 << 17, 1 << 20);
    let lifted = params.lift(&tape);
    let terms = composite_loss(&params.config, &lifted, teacher_cls, image, target_prob, loss)?;
    let grads = tape.gradients(terms.total);
    let per_tensor =
        params.trainable_indices().iter().map(|&i| lifted[i].iter().map(|&v| grads.wrt(v)).collect()).collect();
    Ok((terms.values(), per_tensor))
}

fn evaluate_prepared(params: &ParamSet, items: &[Prepared], loss: &LossConfig) -> Result<EvalSummary> {
    let mut acc = EvalSummary { loss: 0.0, distill: 0.0, kl: 0.0, cc: 0.0 };
    for item in items {
        let out = forward_f64(params, &item.image)?;
        let terms = loss_from_forward(&params.config, &out, &item.teacher_cls, &item.target_prob, loss)?;
        let map = rollout_map(&params.config, &out.attention, loss.order)?;
        let side = params.config.image_size;
        let map = Grid2D::new(side, side, map)?;
        acc.loss += terms.total;
        acc.distill += terms.distill;
        acc.kl += terms.kl;
        // a flat rollout or target has no defined correlation; count it as 0
        acc.cc += cc(&map, &item.target).unwrap_or(0.0);
    }
    let n = items.len() as f64;
    Ok(EvalSummary { loss: acc.loss / n, distill: acc.distill / n, kl: acc.kl / n, cc: acc.cc / n })
}

/// Mean loss terms and rollout-to-target CC of `params` on `samples`, with
/// `teacher` supplying the distillation reference.
pub fn evaluate(params: &ParamSet, teacher: &ParamSet, samples: &[Sample], loss: &LossConfig) -> Result<EvalSummary> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let items = prepare(samples, None, teacher, loss)?;
    evaluate_prepared(params, &items, loss)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainOutcome {
    /// Best checkpoint by validation loss.
    pub params: ParamSet,
    pub history: Vec<EvalRecord>,
    pub best_step: usize,
    pub best_val_loss: f64,
    pub steps_run: usize,
    pub stopped_early: bool,
    /// Target index used for each train / validation item.
    pub train_pairing: Vec<usize>,
    pub val_pairing: Vec<usize>,
    pub optimizer: AdamW,
}

/// Early-stopping bookkeeping.
#[derive(Debug, Clone)]
struct Stopper {
    best: f64,
    best_step: usize,
    bad_evals: usize,
    best_params: ParamSet,
}

impl Stopper {
    /// Returns `true` when training should stop.
    fn observe(&mut self, step: usize, val: f64, params: &ParamSet, patience: usize, min_delta: f64) -> bool {
        if val < self.best - min_delta {
            self.best = val;
            self.best_step = step;
            self.bad_evals = 0;
            self.best_params = params.clone();
            false
        } else {
            self.bad_evals += 1;
            self.bad_evals >= patience
        }
    }
}

/// Trains the attention projections of `initial` against the targets.
/// The teacher is a frozen copy of `initial`.
pub fn train(
    initial: &ParamSet,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainConfig,
    mode: ControlMode,
) -> Result<TrainOutcome> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::Config("batch size must be positive".into()));
    }
    if train_set.len() < cfg.batch_size {
        return Err(TrainError::BatchTooLarge { batch: cfg.batch_size, train: train_set.len() });
    }
    let teacher = initial.clone();
    let (train_pairing, val_pairing) = match mode {
        ControlMode::Aligned => ((0..train_set.len()).collect(), (0..val_set.len()).collect()),
        ControlMode::Shuffled => shuffled_pairings(train_set.len(), val_set.len(), cfg.shuffle_seed)?,
    };
    let (train_items, val_items) = match mode {
        ControlMode::Aligned => {
            (prepare(train_set, None, &teacher, &cfg.loss)?, prepare(val_set, None, &teacher, &cfg.loss)?)
        }
        ControlMode::Shuffled => (
            prepare(train_set, Some(&train_pairing), &teacher, &cfg.loss)?,
            prepare(val_set, Some(&val_pairing), &teacher, &cfg.loss)?,
        ),
    };

    let steps_per_epoch = train_items.len().div_ceil(cfg.batch_size);
    let eval_interval = cfg.eval_interval.unwrap_or(DEFAULT_EVAL_INTERVAL.min(steps_per_epoch)).max(1);
    let mut params = initial.clone();
    let mut optimizer = AdamW::new(cfg.optimizer, &params);
    let mut history = Vec::new();

    let initial_eval = evaluate_prepared(&params, &val_items, &cfg.loss)?;
    history.push(EvalRecord {
        step: 0,
        epoch: 0,
        train_loss: None,
        val_loss: initial_eval.loss,
        val_distill: initial_eval.distill,
        val_kl: initial_eval.kl,
        val_cc: initial_eval.cc,
    });
    let mut stopper = Stopper { best: initial_eval.loss, best_step: 0, bad_evals: 0, best_params: params.clone() };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_items.len()).collect();
    let mut step = 0;
    let mut running = (0.0, 0usize);
    let mut stopped_early = false;
    let max_steps = cfg.max_steps.unwrap_or(usize::MAX);
    'epochs: for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            if step >= max_steps {
                break 'epochs;
            }
            let mut sum: Option<Vec<Vec<f64>>> = None;
            let mut batch_loss = 0.0;
            for &i in batch {
                let item = &train_items[i];
                let (terms, grads) =
                    loss_and_gradients(&params, &item.teacher_cls, &item.image, &item.target_prob, &cfg.loss).map_err(
                        |e| match e {
                            TrainError::NonFiniteLoss => {
                                TrainError::Diverged { step: step + 1, history: history.clone() }
                            }
                            other => other,
                        },
                    )?;
                batch_loss += terms.total;
                match sum.as_mut() {
                    None => sum = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&grads) {
                            for (x, y) in a.iter_mut().zip(g) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let mut grads = sum.expect("batches are non-empty");
            grads.iter_mut().flatten().for_each(|g| *g *= scale);
            optimizer.step(&mut params, &grads);
            step += 1;
            running.0 += batch_loss * scale;
            running.1 += 1;

            if step % eval_interval == 0 {
                let e = evaluate_prepared(&params, &val_items, &cfg.loss)?;
                if !e.loss.is_finite() {
                    return Err(TrainError::Diverged { step, history });
                }
                history.push(EvalRecord {
                    step,
                    epoch,
                    train_loss: Some(running.0 / running.1 as f64),
                    val_loss: e.loss,
                    val_distill: e.distill,
                    val_kl: e.kl,
                    val_cc: e.cc,
                });
                running = (0.0, 0);
                if stopper.observe(step, e.loss, &params, cfg.patience, cfg.min_delta) {
                    stopped_early = true;
                    break 'epochs;
                }
            }
        }
    }

    Ok(TrainOutcome {
        params: stopper.best_params,
        history,
        best_step: stopper.best_step,
        best_val_loss: stopper.best,
        steps_run: step,
        stopped_early,
        train_pairing,
        val_pairing,
        optimizer,
    })
}
