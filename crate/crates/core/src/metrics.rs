//! Saliency alignment metrics: CC, NSS, AUC-Judd, KL and SIM, plus the
//! headroom-normalised gain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixation::{to_probability, PROBABILITY_EPSILON};
use crate::scalar::kl_divergence;
use crate::tensor_io::{FixationSet, Grid2D};

/// Denominator guard in [`normalised_gain`].
pub const GAIN_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    /// `Σ p_model · ln(p_model / p_human)`.
    #[default]
    ModelToHuman,
    /// `Σ p_human · ln(p_human / p_model)`, the saliency-benchmark convention.
    HumanToModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NssMode {
    /// Mean z-score over fixated pixels of all observers together.
    #[default]
    Pooled,
    /// Mean of per-observer NSS values.
    PerObserver,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub epsilon: f64,
    pub kl_direction: KlDirection,
    pub nss_mode: NssMode,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self { epsilon: PROBABILITY_EPSILON, kl_direction: KlDirection::ModelToHuman, nss_mode: NssMode::Pooled }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPanel {
    pub cc: f64,
    pub nss: f64,
    pub auc_judd: f64,
    pub kl_nats: f64,
    pub sim: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Pearson correlation over the flattened maps.
pub fn cc(a: &Grid2D, b: &Grid2D) -> Result<f64> {
    a.ensure_same_dims(b)?;
    pearson(a.values(), b.values()).ok_or(Error::ConstantMap("CC"))
}

/// Pearson correlation; `None` when either input has zero variance.
pub(crate) fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Mean population z-score of `saliency` at the given pixels.
pub fn nss_at(saliency: &Grid2D, pixels: &[(usize, usize)]) -> Result<f64> {
    if pixels.is_empty() {
        return Err(Error::Empty("NSS needs at least one fixation".into()));
    }
    let (w, h) = saliency.dims();
    if let Some(&(x, y)) = pixels.iter().find(|&&(x, y)| x >= w || y >= h) {
        return Err(Error::OutOfBounds(format!("fixation pixel ({x}, {y}) outside {w}x{h}")));
    }
    let m = mean(saliency.values());
    let var = saliency.values().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / saliency.len() as f64;
    if var == 0.0 {
        return Err(Error::ConstantMap("NSS"));
    }
    let sd = var.sqrt();
    Ok(pixels.iter().map(|&(x, y)| (saliency.get(x, y) - m) / sd).sum::<f64>() / pixels.len() as f64)
}

pub fn nss(saliency: &Grid2D, fixations: &FixationSet, mode: NssMode) -> Result<f64> {
    check_fixation_dims(saliency, fixations)?;
    match mode {
        NssMode::Pooled => nss_at(saliency, &fixations.fixated_pixels()),
        NssMode::PerObserver => {
            let per: Vec<f64> = (0..fixations.observers.len())
                .filter(|&o| !fixations.observers[o].is_empty())
                .map(|o| nss_at(saliency, &fixations.observer_pixels(o)))
                .collect::<Result<_>>()?;
            if per.is_empty() {
                return Err(Error::Empty("NSS needs at least one fixation".into()));
            }
            Ok(mean(&per))
        }
    }
}

fn check_fixation_dims(saliency: &Grid2D, fixations: &FixationSet) -> Result<()> {
    if saliency.dims() != fixations.dims() {
        return Err(Error::DimensionMismatch(format!(
            "saliency {:?} vs fixations {:?}",
            saliency.dims(),
            fixations.dims()
        )));
    }
    Ok(())
}

/// AUC-Judd over distinct fixated pixels.
///
/// Thresholds are the distinct saliency values at fixated pixels; a pixel
/// counts as above a threshold when its value is `>=` it. The ROC curve is
/// anchored at `(0, 0)` and `(1, 1)` and integrated by trapezoids.
pub fn auc_judd_at(saliency: &Grid2D, pixels: &[(usize, usize)]) -> Result<f64> {
    let (w, h) = saliency.dims();
    let n = saliency.len();
    let mut fixated: Vec<f64> = Vec::with_capacity(pixels.len());
    let mut seen = vec![false; n];
    for &(x, y) in pixels {
        if x >= w || y >= h {
            return Err(Error::OutOfBounds(format!("fixation pixel ({x}, {y}) outside {w}x{h}")));
        }
        if !std::mem::replace(&mut seen[y * w + x], true) {
            fixated.push(saliency.get(x, y));
        }
    }
    let n_fix = fixated.len();
    if n_fix == 0 {
        return Err(Error::Empty("AUC needs at least one fixated pixel".into()));
    }
    if n_fix == n {
        return Err(Error::InvalidArgument("AUC undefined when every pixel is fixated".into()));
    }
    let n_non = (n - n_fix) as f64;

    let mut all: Vec<f64> = saliency.values().to_vec();
    all.sort_unstable_by(|a, b| b.total_cmp(a));
    fixated.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut thresholds = fixated.clone();
    thresholds.dedup();

    let mut area = 0.0;
    let (mut prev_fpr, mut prev_tpr) = (0.0, 0.0);
    for &t in &thresholds {
        let above_all = all.partition_point(|&v| v >= t);
        let above_fix = fixated.partition_point(|&v| v >= t);
        let tpr = above_fix as f64 / n_fix as f64;
        let fpr = (above_all - above_fix) as f64 / n_non;
        area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        (prev_fpr, prev_tpr) = (fpr, tpr);
    }
    area += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
    Ok(area)
}

pub fn auc_judd(saliency: &Grid2D, fixations: &FixationSet) -> Result<f64> {
    check_fixation_dims(saliency, fixations)?;
    auc_judd_at(saliency, &fixations.fixated_pixels())
}

/// KL divergence in nats between the probability forms of two maps.
pub fn kl(model: &Grid2D, human: &Grid2D, epsilon: f64, direction: KlDirection) -> Result<f64> {
    model.ensure_same_dims(human)?;
    let p_model = to_probability(model, epsilon)?;
    let p_human = to_probability(human, epsilon)?;
    let (p, q) = match direction {
        KlDirection::ModelToHuman => (p_model.grid.values(), p_human.grid.values()),
        KlDirection::HumanToModel => (p_human.grid.values(), p_model.grid.values()),
    };
    Ok(kl_divergence(p, q).max(0.0))
}

/// Histogram intersection of the probability forms of two maps.
pub fn sim(a: &Grid2D, b: &Grid2D, epsilon: f64) -> Result<f64> {
    a.ensure_same_dims(b)?;
    let pa = to_probability(a, epsilon)?;
    let pb = to_probability(b, epsilon)?;
    Ok(pa.grid.values().iter().zip(pb.grid.values()).map(|(x, y)| x.min(*y)).sum::<f64>().min(1.0))
}

/// `(cc_tuned − cc_base) / (1 − cc_base + 1e-8)`.
pub fn normalised_gain(cc_tuned: f64, cc_base: f64) -> f64 {
    (cc_tuned - cc_base) / (1.0 - cc_base + GAIN_EPSILON)
}

/// All five metrics for one image. `model` and `human` are min-max maps at
/// the fixation resolution.
pub fn score_panel(
    model: &Grid2D,
    human: &Grid2D,
    fixations: &FixationSet,
    options: &ScoreOptions,
) -> Result<MetricPanel> {
    Ok(MetricPanel {
        cc: cc(model, human)?,
        nss: nss(model, fixations, options.nss_mode)?,
        auc_judd: auc_judd(model, fixations)?,
        kl_nats: kl(model, human, options.epsilon, options.kl_direction)?,
        sim: sim(model, human, options.epsilon)?,
    })
}
