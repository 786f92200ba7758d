//! Fixation density maps and inter-observer consistency.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics;
use crate::tensor_io::{Fixation, FixationSet, Grid2D};

/// Default smoothing bandwidth in target-resolution pixels.
pub const DEFAULT_SIGMA: f64 = 15.0;
/// Default model input resolution.
pub const DEFAULT_SIZE: usize = 224;
/// Floor added to both maps before any probability-based comparison.
pub const PROBABILITY_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalisation {
    MinMax,
    Prob,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    pub grid: Grid2D,
    pub normalisation: Normalisation,
    /// Set when min-max normalisation saw a constant input.
    pub flat: bool,
}

/// Truncated, unnormalised Gaussian taps `exp(-r²/2σ²)` for `r ∈ [-R, R]`,
/// `R = ⌈4σ⌉`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as i64;
    let denom = 2.0 * sigma * sigma;
    (-radius..=radius).map(|r| (-((r * r) as f64) / denom).exp()).collect()
}

/// Accumulates fixation counts on an integer pixel grid.
pub fn bin_fixations<'a>(fixations: impl IntoIterator<Item = &'a Fixation>, dims: (usize, usize)) -> Result<Grid2D> {
    let (w, h) = dims;
    let mut counts = Grid2D::zeros(w, h);
    let mut any = false;
    for f in fixations {
        let (x, y) = f.pixel();
        if x >= w || y >= h || f.x < 0.0 || f.y < 0.0 {
            return Err(Error::OutOfBounds(format!("fixation ({}, {}) outside {w}x{h}", f.x, f.y)));
        }
        counts.set(x, y, counts.get(x, y) + 1.0);
        any = true;
    }
    if !any {
        return Err(Error::Empty("no fixations to bin".into()));
    }
    Ok(counts)
}

/// Separable convolution with a symmetric kernel, zero padding at borders.
pub fn convolve_separable(grid: &Grid2D, kernel: &[f64]) -> Grid2D {
    let (w, h) = grid.dims();
    let r = (kernel.len() / 2) as isize;
    let src = grid.values();

    let mut horizontal = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for (x, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let lo = (x as isize - r).max(0) as usize;
            let hi = (x as isize + r).min(w as isize - 1) as usize;
            for ox in lo..=hi {
                horizontal[y * w + ox] += v * kernel[(ox as isize - x as isize + r) as usize];
            }
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let lo = (y as isize - r).max(0) as usize;
        let hi = (y as isize + r).min(h as isize - 1) as usize;
        for oy in lo..=hi {
            let k = kernel[(oy as isize - y as isize + r) as usize];
            let src_row = &horizontal[y * w..(y + 1) * w];
            let dst_row = &mut out[oy * w..(oy + 1) * w];
            for (d, &s) in dst_row.iter_mut().zip(src_row) {
                *d += s * k;
            }
        }
    }
    Grid2D::new(w, h, out).expect("convolution preserves shape and finiteness")
}

/// Bins fixations, smooths them with a truncated Gaussian and min-max
/// normalises the result.
pub fn density_map<'a>(
    fixations: impl IntoIterator<Item = &'a Fixation>,
    dims: (usize, usize),
    sigma: f64,
) -> Result<DensityMap> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let counts = bin_fixations(fixations, dims)?;
    let smoothed = convolve_separable(&counts, &gaussian_kernel(sigma));
    let (grid, flat) = smoothed.min_max_normalised();
    Ok(DensityMap { grid, normalisation: Normalisation::MinMax, flat })
}

/// Density map over every observer's fixations pooled together.
pub fn pooled_density_map(set: &FixationSet, sigma: f64) -> Result<DensityMap> {
    density_map(set.pooled(), set.dims(), sigma)
}

/// One density map per observer, in observer order.
pub fn observer_density_maps(set: &FixationSet, sigma: f64) -> Result<Vec<DensityMap>> {
    set.observers.iter().map(|o| density_map(o.iter(), set.dims(), sigma)).collect()
}

/// `(v + ε) / (Σv + N·ε)` over a non-negative map.
pub fn to_probability(grid: &Grid2D, epsilon: f64) -> Result<DensityMap> {
    if let Some(i) = grid.values().iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(format!("negative value at index {i}")));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::InvalidArgument(format!("epsilon must be non-negative, got {epsilon}")));
    }
    let total = grid.sum() + epsilon * grid.len() as f64;
    if total <= 0.0 {
        return Err(Error::Empty("map has no mass and epsilon is zero".into()));
    }
    let values = crate::scalar::probability_normalise(grid.values(), epsilon);
    Ok(DensityMap {
        grid: Grid2D::new(grid.width(), grid.height(), values)?,
        normalisation: Normalisation::Prob,
        flat: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Consistency {
    pub mean_cc: f64,
    pub pairs_used: usize,
    /// Pairs involving a constant map, for which CC is undefined.
    pub pairs_skipped: usize,
}

/// Mean Pearson CC over all unordered pairs of observer maps.
pub fn interobserver_consistency(observers: &[DensityMap]) -> Result<Consistency> {
    if observers.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least two observers, got {}", observers.len())));
    }
    let dims = observers[0].grid.dims();
    if let Some(m) = observers.iter().find(|m| m.grid.dims() != dims) {
        return Err(Error::DimensionMismatch(format!("{dims:?} vs {:?}", m.grid.dims())));
    }
    let (mut total, mut used, mut skipped) = (0.0, 0, 0);
    for i in 0..observers.len() {
        for j in i + 1..observers.len() {
            match metrics::cc(&observers[i].grid, &observers[j].grid) {
                Ok(r) => {
                    total += r;
                    used += 1;
                }
                Err(Error::ConstantMap(_)) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    if used == 0 {
        return Err(Error::ConstantMap("inter-observer consistency"));
    }
    Ok(Consistency { mean_cc: total / used as f64, pairs_used: used, pairs_skipped: skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fix(x: f64, y: f64) -> Fixation {
        Fixation { x, y }
    }

    #[test]
    fn single_fixation_peak_and_ratio() {
        let f = [fix(112.0, 112.0)];
        let m = density_map(&f, (224, 224), 15.0).unwrap();
        assert_eq!(m.grid.get(112, 112), 1.0);
        let ratio = m.grid.get(127, 112) / m.grid.get(112, 112);
        assert!((ratio - (-0.5f64).exp()).abs() < 1e-3);
        // radial symmetry along axes and diagonals
        for d in 1..40 {
            let a = m.grid.get(112 + d, 112);
            assert_eq!(a, m.grid.get(112 - d, 112));
            assert_eq!(a, m.grid.get(112, 112 + d));
            assert_eq!(m.grid.get(112 + d, 112 + d), m.grid.get(112 - d, 112 - d));
        }
    }

    #[test]
    fn mirrored_pair_is_flip_symmetric() {
        let f = [fix(60.3, 80.0), fix(163.7, 80.0)];
        let m = density_map(&f, (224, 224), 15.0).unwrap();
        for y in 0..224 {
            for x in 0..224 {
                assert!((m.grid.get(x, y) - m.grid.get(223 - x, y)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empty_fixations_rejected() {
        let f: [Fixation; 0] = [];
        assert!(matches!(density_map(&f, (8, 8), 1.0), Err(Error::Empty(_))));
        assert!(matches!(density_map(&[fix(1.0, 1.0)], (8, 8), 0.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn probability_examples() {
        let ones = Grid2D::filled(2, 2, 1.0);
        assert_eq!(to_probability(&ones, 0.0).unwrap().grid.values(), &[0.25; 4]);
        let g = Grid2D::new(2, 1, vec![1.0, 3.0]).unwrap();
        assert_eq!(to_probability(&g, 0.0).unwrap().grid.values(), &[0.25, 0.75]);
        let z = Grid2D::zeros(2, 2);
        let p = to_probability(&z, 1e-10).unwrap();
        for v in p.grid.values() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert!(matches!(to_probability(&z, 0.0), Err(Error::Empty(_))));
    }

    #[test]
    fn consistency_examples() {
        let base = Grid2D::from_fn(4, 4, |x, y| (x * 3 + y * y) as f64).unwrap();
        let m = |g: Grid2D| DensityMap { grid: g, normalisation: Normalisation::MinMax, flat: false };
        let same = vec![m(base.clone()), m(base.clone()), m(base.clone())];
        assert!((interobserver_consistency(&same).unwrap().mean_cc - 1.0).abs() < 1e-12);

        let mean = base.sum() / base.len() as f64;
        let neg = base.map(|v| 2.0 * mean - v).unwrap();
        let c = interobserver_consistency(&[m(base.clone()), m(neg)]).unwrap();
        assert!((c.mean_cc + 1.0).abs() < 1e-12);

        let flat = m(Grid2D::filled(4, 4, 0.0));
        let c = interobserver_consistency(&[m(base.clone()), m(base.clone()), flat.clone()]).unwrap();
        assert_eq!((c.pairs_used, c.pairs_skipped), (1, 2));
        assert!(interobserver_consistency(&[m(base), flat.clone(), flat]).is_err());
    }
}
