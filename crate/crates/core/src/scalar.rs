//! Scalar abstraction shared by the plain `f64` analysis path and the
//! differentiable path used during fine-tuning.
//!
//! Rollout, probability normalisation and KL are written once against
//! [`Real`]; the trainer instantiates them with a taped variable type.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// A value that carries no derivative.
    fn constant(value: f64) -> Self;

    fn value(self) -> f64;

    fn exp(self) -> Self;

    fn ln(self) -> Self;

    fn sqrt(self) -> Self;

    fn tanh(self) -> Self;

    fn recip(self) -> Self {
        Self::constant(1.0) / self
    }

    fn sum(xs: &[Self]) -> Self {
        match xs.split_first() {
            None => Self::constant(0.0),
            Some((first, rest)) => rest.iter().fold(*first, |acc, &x| acc + x),
        }
    }

    /// Inner product. Implementors may record it as a single fused node.
    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = Self::constant(0.0);
        for (&x, &y) in a.iter().zip(b) {
            acc = acc + x * y;
        }
        acc
    }

    /// `Σ_i w_i · x_i` with constant weights.
    fn weighted_sum(weights: &[f64], xs: &[Self]) -> Self {
        debug_assert_eq!(weights.len(), xs.len());
        let mut acc = Self::constant(0.0);
        for (&w, &x) in weights.iter().zip(xs) {
            acc = acc + x * w;
        }
        acc
    }
}

impl Real for f64 {
    #[inline]
    fn constant(value: f64) -> Self {
        value
    }

    #[inline]
    fn value(self) -> f64 {
        self
    }

    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }

    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }

    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }

    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }

    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }

    fn sum(xs: &[Self]) -> Self {
        xs.iter().sum()
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn weighted_sum(weights: &[f64], xs: &[Self]) -> Self {
        Self::dot(weights, xs)
    }
}

/// Index of the smallest and largest element, compared by value.
/// The first occurrence wins on ties.
pub fn argmin_argmax<T: Real>(xs: &[T]) -> Option<(usize, usize)> {
    if xs.is_empty() {
        return None;
    }
    let (mut lo, mut hi) = (0, 0);
    for (i, x) in xs.iter().enumerate().skip(1) {
        let v = x.value();
        if v < xs[lo].value() {
            lo = i;
        }
        if v > xs[hi].value() {
            hi = i;
        }
    }
    Some((lo, hi))
}

/// Ranges at or below this fraction of the largest magnitude count as flat,
/// so rounding noise in a mathematically constant map is not stretched to
/// `[0, 1]`.
pub const FLAT_RELATIVE_TOLERANCE: f64 = 1e-12;

/// Min-max normalisation into `[0, 1]`.
///
/// The extremum indices are treated as fixed, so derivatives flow through
/// the selected minimum and maximum values. A (numerically) constant input
/// maps to all zeros and the second return value is `true`.
pub fn min_max_normalise<T: Real>(xs: &[T]) -> (Vec<T>, bool) {
    let Some((lo, hi)) = argmin_argmax(xs) else {
        return (Vec::new(), true);
    };
    let min = xs[lo];
    let range = xs[hi] - min;
    let scale = min.value().abs().max(xs[hi].value().abs());
    if range.value() <= FLAT_RELATIVE_TOLERANCE * scale {
        return (vec![T::constant(0.0); xs.len()], true);
    }
    // divide rather than multiply by the reciprocal so the maximum is exactly 1
    (xs.iter().map(|&x| (x - min) / range).collect(), false)
}

/// `(x_i + ε) / (Σx + N·ε)`. Callers guarantee non-negative inputs.
pub fn probability_normalise<T: Real>(xs: &[T], epsilon: f64) -> Vec<T> {
    let total = T::sum(xs) + epsilon * xs.len() as f64;
    let inv = total.recip();
    xs.iter().map(|&x| (x + epsilon) * inv).collect()
}

/// `Σ p_i · ln(p_i / q_i)` over probability vectors. Terms with `p_i = 0`
/// contribute zero.
pub fn kl_divergence<T: Real>(p: &[T], q: &[T]) -> T {
    debug_assert_eq!(p.len(), q.len());
    let terms: Vec<T> =
        p.iter().zip(q).filter(|(pi, _)| pi.value() > 0.0).map(|(&pi, &qi)| pi * (pi.ln() - qi.ln())).collect();
    T::sum(&terms)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_max_constant_is_flagged() {
        let (out, flat) = min_max_normalise(&[2.0, 2.0, 2.0]);
        assert!(flat);
        assert_eq!(out, vec![0.0; 3]);
    }

    #[test]
    fn min_max_spans_unit_interval() {
        let (out, flat) = min_max_normalise(&[1.0, 3.0, 2.0]);
        assert!(!flat);
        assert_eq!(out, vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn kl_of_identical_is_zero() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(kl_divergence(&p, &p), 0.0);
    }
}
