//! Attention rollout and corner-aligned bilinear upsampling.
//!
//! Per layer the head-averaged attention `Ā` is augmented with the identity
//! and row-normalised, `Â = rownorm(Ā + I)`. Layers are chained as
//! `R ← Â_l · R`, starting from `Â_1`, and the class-token row of the final
//! `R` restricted to patch tokens is the spatial attention map.
//!
//! Everything here is generic over [`Real`] so the fine-tuning loss runs the
//! same code on taped variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{min_max_normalise, Real};
use crate::tensor_io::{AttentionStack, Grid2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormaliseOrder {
    /// Upsample the raw patch vector, then min-max normalise.
    #[default]
    AfterUpsample,
    /// Min-max normalise on the patch grid, then upsample.
    BeforeUpsample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutOptions {
    pub target: (usize, usize),
    pub order: NormaliseOrder,
}

impl Default for RolloutOptions {
    fn default() -> Self {
        Self {
            target: (crate::fixation::DEFAULT_SIZE, crate::fixation::DEFAULT_SIZE),
            order: NormaliseOrder::AfterUpsample,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutMap {
    /// Raw class-token attention over patches, on the patch grid.
    pub patch_grid: Grid2D,
    /// Upsampled and min-max normalised map.
    pub upsampled: Grid2D,
    /// Set when the map was constant before normalisation.
    pub flat: bool,
}

/// Generic result of [`rollout_values`].
#[derive(Debug, Clone)]
pub struct RolloutValues<T> {
    pub grid_side: usize,
    pub patch: Vec<T>,
    pub upsampled: Vec<T>,
    pub flat: bool,
}

/// Mean over heads of one layer's `heads × tokens × tokens` block. Each
/// element's head values are summed in ascending order, so the result is
/// bit-identical under any permutation of the heads.
pub fn head_mean<T: Real>(layer: &[T], heads: usize, tokens: usize) -> Vec<T> {
    let n = tokens * tokens;
    debug_assert_eq!(layer.len(), heads * n);
    let inv = 1.0 / heads as f64;
    (0..n)
        .map(|i| {
            let mut column: Vec<T> = (0..heads).map(|h| layer[h * n + i]).collect();
            column.sort_by(|a, b| a.value().total_cmp(&b.value()));
            T::sum(&column) * inv
        })
        .collect()
}

/// Divides each row by its sum.
pub fn rownorm<T: Real>(m: &[T], tokens: usize) -> Vec<T> {
    m.chunks_exact(tokens)
        .flat_map(|row| {
            let inv = T::sum(row).recip();
            row.iter().map(move |&v| v * inv)
        })
        .collect()
}

/// `rownorm(M + I)`.
pub fn residual_rownorm<T: Real>(m: &[T], tokens: usize) -> Vec<T> {
    let mut aug = m.to_vec();
    for i in 0..tokens {
        aug[i * tokens + i] = aug[i * tokens + i] + 1.0;
    }
    rownorm(&aug, tokens)
}

/// Square matrix product `a · b`.
pub fn matmul<T: Real>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut bt = Vec::with_capacity(n * n);
    for j in 0..n {
        for k in 0..n {
            bt.push(b[k * n + j]);
        }
    }
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        let row = &a[i * n..(i + 1) * n];
        for j in 0..n {
            out.push(T::dot(row, &bt[j * n..(j + 1) * n]));
        }
    }
    out
}

/// The full rollout matrix `R = Â_L ⋯ Â_1` from a flat
/// `layers × heads × tokens × tokens` array.
pub fn rollout_matrix<T: Real>(attention: &[T], layers: usize, heads: usize, tokens: usize) -> Vec<T> {
    let per_layer = heads * tokens * tokens;
    debug_assert_eq!(attention.len(), layers * per_layer);
    let mut r: Option<Vec<T>> = None;
    for layer in attention.chunks_exact(per_layer) {
        let a_hat = residual_rownorm(&head_mean(layer, heads, tokens), tokens);
        r = Some(match r {
            None => a_hat,
            Some(prev) => matmul(&a_hat, &prev, tokens),
        });
    }
    r.unwrap_or_default()
}

/// Side length of the square patch grid for `tokens` (class token included).
pub fn patch_grid_side(tokens: usize) -> Result<usize> {
    if tokens < 2 {
        return Err(Error::Shape(format!("need at least 2 tokens, got {tokens}")));
    }
    let patches = tokens - 1;
    let side = (patches as f64).sqrt().round() as usize;
    if side * side != patches {
        return Err(Error::Shape(format!("{patches} patch tokens do not form a square grid")));
    }
    Ok(side)
}

fn axis_coordinate(out: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    if src_len == 1 || dst_len == 1 {
        return (0, 0, 0.0);
    }
    let s = (out * (src_len - 1)) as f64 / (dst_len - 1) as f64;
    let i0 = (s.floor() as usize).min(src_len - 1);
    let i1 = (i0 + 1).min(src_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Corner-aligned bilinear resampling of a row-major `sw × sh` array.
pub fn bilinear_upsample_values<T: Real>(src: &[T], (sw, sh): (usize, usize), (tw, th): (usize, usize)) -> Vec<T> {
    let xs: Vec<_> = (0..tw).map(|x| axis_coordinate(x, sw, tw)).collect();
    let mut out = Vec::with_capacity(tw * th);
    for y in 0..th {
        let (y0, y1, fy) = axis_coordinate(y, sh, th);
        for &(x0, x1, fx) in &xs {
            let taps = [src[y0 * sw + x0], src[y0 * sw + x1], src[y1 * sw + x0], src[y1 * sw + x1]];
            let weights = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
            out.push(T::weighted_sum(&weights, &taps));
        }
    }
    out
}

pub fn bilinear_upsample(grid: &Grid2D, target: (usize, usize)) -> Result<Grid2D> {
    if target.0 == 0 || target.1 == 0 {
        return Err(Error::InvalidArgument(format!("target dims must be positive, got {target:?}")));
    }
    let values = bilinear_upsample_values(grid.values(), grid.dims(), target);
    Grid2D::new(target.0, target.1, values)
}

/// Bilinear value at continuous source coordinates `(sx, sy)`.
pub fn bilinear_sample(grid: &Grid2D, sx: f64, sy: f64) -> f64 {
    let (w, h) = grid.dims();
    let sx = sx.clamp(0.0, (w - 1) as f64);
    let sy = sy.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
    (1.0 - fx) * (1.0 - fy) * grid.get(x0, y0)
        + fx * (1.0 - fy) * grid.get(x1, y0)
        + (1.0 - fx) * fy * grid.get(x0, y1)
        + fx * fy * grid.get(x1, y1)
}

/// Generic rollout from flat attention values to the normalised map.
pub fn rollout_values<T: Real>(
    attention: &[T],
    layers: usize,
    heads: usize,
    tokens: usize,
    options: RolloutOptions,
) -> Result<RolloutValues<T>> {
    let side = patch_grid_side(tokens)?;
    if layers == 0 || heads == 0 {
        return Err(Error::Shape("rollout needs at least one layer and head".into()));
    }
    if attention.len() != layers * heads * tokens * tokens {
        return Err(Error::Shape(format!(
            "{} attention values for {layers}x{heads}x{tokens}x{tokens}",
            attention.len()
        )));
    }
    let (tw, th) = options.target;
    if tw == 0 || th == 0 {
        return Err(Error::InvalidArgument(format!("target dims must be positive, got {tw}x{th}")));
    }
    let r = rollout_matrix(attention, layers, heads, tokens);
    let patch: Vec<T> = r[1..tokens].to_vec();
    let (upsampled, flat) = match options.order {
        NormaliseOrder::AfterUpsample => min_max_normalise(&bilinear_upsample_values(&patch, (side, side), (tw, th))),
        NormaliseOrder::BeforeUpsample => {
            let (norm, flat) = min_max_normalise(&patch);
            (bilinear_upsample_values(&norm, (side, side), (tw, th)), flat)
        }
    };
    Ok(RolloutValues { grid_side: side, patch, upsampled, flat })
}

pub fn rollout(stack: &AttentionStack, options: RolloutOptions) -> Result<RolloutMap> {
    stack.check_row_stochastic(crate::tensor_io::ROW_SUM_TOLERANCE)?;
    let v = rollout_values(stack.values(), stack.layers(), stack.heads(), stack.tokens(), options)?;
    Ok(RolloutMap {
        patch_grid: Grid2D::new(v.grid_side, v.grid_side, v.patch)?,
        upsampled: Grid2D::new(options.target.0, options.target.1, v.upsampled)?,
        flat: v.flat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_stack(layers: usize, heads: usize, tokens: usize) -> AttentionStack {
        let v = vec![1.0 / tokens as f64; layers * heads * tokens * tokens];
        AttentionStack::new(layers, heads, tokens, v).unwrap()
    }

    fn identity_stack(layers: usize, heads: usize, tokens: usize) -> AttentionStack {
        let mut v = Vec::new();
        for _ in 0..layers * heads {
            for i in 0..tokens {
                for j in 0..tokens {
                    v.push(if i == j { 1.0 } else { 0.0 });
                }
            }
        }
        AttentionStack::new(layers, heads, tokens, v).unwrap()
    }

    #[test]
    fn uniform_attention_gives_flat_map() {
        let m = rollout(&uniform_stack(3, 2, 17), RolloutOptions { target: (32, 32), ..Default::default() }).unwrap();
        assert!(m.flat);
        assert!(m.upsampled.values().iter().all(|&v| v == 0.0));
        let first = m.patch_grid.values()[0];
        assert!(m.patch_grid.values().iter().all(|&v| (v - first).abs() < 1e-15));
    }

    #[test]
    fn identity_attention_puts_no_mass_on_patches() {
        let m = rollout(&identity_stack(2, 3, 10), RolloutOptions { target: (9, 9), ..Default::default() }).unwrap();
        assert!(m.patch_grid.values().iter().all(|&v| v == 0.0));
        assert!(m.flat);
    }

    #[test]
    fn rejects_non_square_patch_count() {
        let s = uniform_stack(1, 1, 6);
        assert!(matches!(rollout(&s, RolloutOptions::default()), Err(Error::Shape(_))));
    }

    #[test]
    fn constant_upsamples_to_constant() {
        let g = Grid2D::filled(14, 14, 0.7);
        let up = bilinear_upsample(&g, (224, 224)).unwrap();
        assert!(up.values().iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn linear_field_is_reproduced() {
        let g = Grid2D::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let up = bilinear_upsample(&g, (5, 3)).unwrap();
        for y in 0..3 {
            for x in 0..5 {
                assert!((up.get(x, y) - x as f64 / 4.0).abs() < 1e-15);
            }
        }
        assert!(bilinear_upsample(&g, (0, 3)).is_err());
    }

    #[test]
    fn half_mixture_matches_plain_identity_augmentation() {
        let a = [0.2, 0.5, 0.3, 0.1, 0.1, 0.8, 0.6, 0.3, 0.1];
        let plain = residual_rownorm(&a, 3);
        let half: Vec<f64> = a.iter().map(|v| 0.5 * v).collect();
        let mut mixed = half.clone();
        for i in 0..3 {
            mixed[i * 3 + i] += 0.5;
        }
        let mixed = rownorm(&mixed, 3);
        for (p, m) in plain.iter().zip(&mixed) {
            assert!((p - m).abs() < 1e-15);
        }
    }
}
