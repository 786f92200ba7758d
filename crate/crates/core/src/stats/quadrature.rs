//! Globally adaptive Gauss–Kronrod (7/15) quadrature on a finite interval.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    estimate: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> Segment {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment { a, b, estimate: kronrod * half, error: ((kronrod - gauss) * half).abs() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub segments: usize,
}

/// Integrates `f` over `[a, b]`, bisecting the worst segment until the
/// summed error estimate is below `rel_tol · |I|` (or `abs_tol`).
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_segments: usize,
) -> Result<Integral> {
    let first = kronrod(&f, a, b);
    let mut heap = BinaryHeap::new();
    let (mut value, mut error) = (first.estimate, first.error);
    heap.push(first);
    loop {
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature { estimate: value, error });
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral { value, error, segments: heap.len() });
        }
        if heap.len() >= max_segments {
            return Err(Error::Quadrature { estimate: value, error });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let left = kronrod(&f, worst.a, mid);
        let right = kronrod(&f, mid, worst.b);
        value += left.estimate + right.estimate - worst.estimate;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // Re-sum occasionally so incremental updates do not drift.
        if heap.len() % 64 == 0 {
            value = heap.iter().map(|s| s.estimate).sum();
            error = heap.iter().map(|s| s.error).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12, 0.0, 10).unwrap();
        assert!((r.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn peaked_integrand() {
        let s: f64 = 1e-3;
        let r = integrate(|x| (-(x - 0.3) * (x - 0.3) / (2.0 * s * s)).exp(), 0.0, 1.0, 1e-10, 0.0, 2000).unwrap();
        let exact = s * (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.value - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate(|x| 1.0 / x.sqrt().max(1e-300), 0.0, 1.0, 1e-15, 0.0, 4);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
