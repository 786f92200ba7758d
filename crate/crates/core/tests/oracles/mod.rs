//! Brute-force reference implementations used as test oracles. They favour
//! the most literal formulation over speed and share no code with the
//! library.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Pearson r from raw moments.
pub fn cc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let cov = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n - ma * mb;
    let va = a.iter().map(|x| x * x).sum::<f64>() / n - ma * ma;
    let vb = b.iter().map(|x| x * x).sum::<f64>() / n - mb * mb;
    cov / (va * vb).sqrt()
}

/// Mean z-score (population sd) over the given flat indices.
pub fn nss(map: &[f64], fixated: &[usize]) -> f64 {
    let m = mean(map);
    let sd = (map.iter().map(|v| (v - m).powi(2)).sum::<f64>() / map.len() as f64).sqrt();
    fixated.iter().map(|&i| (map[i] - m) / sd).sum::<f64>() / fixated.len() as f64
}

/// AUC-Judd by enumerating every fixated value as a threshold (duplicates
/// included) and counting pixels directly for each one.
pub fn auc_judd(map: &[f64], fixated: &[usize]) -> f64 {
    let is_fix: Vec<bool> = (0..map.len()).map(|i| fixated.contains(&i)).collect();
    let n_fix = fixated.len() as f64;
    let n_non = (map.len() - fixated.len()) as f64;
    let mut thresholds: Vec<f64> = fixated.iter().map(|&i| map[i]).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut points = vec![(0.0, 0.0)];
    for &t in &thresholds {
        let mut tp = 0.0;
        let mut fp = 0.0;
        for (i, &v) in map.iter().enumerate() {
            if v >= t {
                if is_fix[i] {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        points.push((fp / n_non, tp / n_fix));
    }
    points.push((1.0, 1.0));
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

pub fn prob(map: &[f64], eps: f64) -> Vec<f64> {
    let s: f64 = map.iter().sum();
    map.iter().map(|v| (v + eps) / (s + eps * map.len() as f64)).collect()
}

/// `Σ p ln(p / q)` over probability forms.
pub fn kl(p_map: &[f64], q_map: &[f64], eps: f64) -> f64 {
    let (p, q) = (prob(p_map, eps), prob(q_map, eps));
    p.iter().zip(&q).map(|(a, b)| if *a > 0.0 { a * (a / b).ln() } else { 0.0 }).sum()
}

pub fn sim(a: &[f64], b: &[f64], eps: f64) -> f64 {
    prob(a, eps).iter().zip(prob(b, eps)).map(|(x, y)| x.min(y)).sum()
}

/// Direct 2-D convolution with the outer product of a 1-D kernel, zero
/// padding.
pub fn convolve_2d(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as i64;
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for ky in -r..=r {
                for kx in -r..=r {
                    let (sx, sy) = (x - kx, y - ky);
                    if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
                        continue;
                    }
                    acc += src[(sy * w as i64 + sx) as usize] * kernel[(kx + r) as usize] * kernel[(ky + r) as usize];
                }
            }
            out[(y * w as i64 + x) as usize] = acc;
        }
    }
    out
}

/// Even-odd ray cast at the centre of every pixel.
pub fn polygon_mask(poly: &[f64], w: usize, h: usize) -> Vec<bool> {
    let n = poly.len() / 2;
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut inside = false;
            let mut j = n - 1;
            for i in 0..n {
                let (xi, yi) = (poly[2 * i], poly[2 * i + 1]);
                let (xj, yj) = (poly[2 * j], poly[2 * j + 1]);
                if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
                    inside = !inside;
                }
                j = i;
            }
            out[y * w + x] = inside;
        }
    }
    out
}

/// JZS BF₁₀ by the trapezoid rule over `s = ln g ∈ [−40, 40]` with a million
/// points.
pub fn jzs_bf10_dense(t: f64, n: usize, r: f64) -> f64 {
    let nu = n as f64 - 1.0;
    let nn = n as f64;
    let log_null = -(nu + 1.0) / 2.0 * (1.0 + t * t / nu).ln();
    let f = |s: f64| -> f64 {
        let g = s.exp();
        let log_alt = -0.5 * (1.0 + nn * g).ln() - (nu + 1.0) / 2.0 * (1.0 + t * t / ((1.0 + nn * g) * nu)).ln();
        let log_prior = r.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - 1.5 * g.ln() - r * r / (2.0 * g);
        (log_alt + log_prior - log_null + s).exp()
    };
    let points = 1_000_000;
    let (a, b) = (-40.0, 40.0);
    let step = (b - a) / (points - 1) as f64;
    let mut total = 0.5 * (f(a) + f(b));
    for i in 1..points - 1 {
        total += f(a + i as f64 * step);
    }
    total * step
}

pub fn random_map(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// Map with deliberately repeated values to exercise ties.
pub fn quantised_map(rng: &mut ChaCha8Rng, n: usize, levels: u32) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0..levels) as f64 / levels as f64).collect()
}

/// Distinct flat indices, at least one, fewer than `n`.
pub fn random_fixations(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let k = rng.gen_range(1..n / 2);
    rand::seq::index::sample(rng, n, k).into_vec()
}
