//! Paired tests, correlations, quartile binning and the JZS Bayes factor.

pub mod quadrature;
pub mod special;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use special::{ln_gamma, regularized_incomplete_beta, student_t_cdf, student_t_two_sided_p};

/// Conventional "medium" Cauchy prior scale, √2/2.
pub const DEFAULT_BF_SCALE: f64 = std::f64::consts::FRAC_1_SQRT_2;
/// Relative tolerance demanded of the Bayes-factor quadrature.
pub const BF_REL_TOL: f64 = 1e-8;
const BF_MAX_SEGMENTS: usize = 4000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub sem_diff: f64,
    pub t: f64,
    pub df: usize,
    pub p: f64,
    pub cohens_d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bf01: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bf_scale: Option<f64>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

/// Paired two-sided t-test of `a` against `b` on differences `a − b`.
/// Cohen's d is `mean(d) / sd(d) = t / √n`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<StatReport> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} paired values", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("paired test needs n ≥ 2, got {n}")));
    }
    if let Some(i) = a.iter().chain(b).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i % n });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_diff = mean(&diffs);
    let sd = sample_sd(&diffs);
    if sd == 0.0 || diffs.iter().all(|&d| d == diffs[0]) {
        return Err(Error::ZeroVariance("paired differences"));
    }
    let sem = sd / (n as f64).sqrt();
    let t = mean_diff / sem;
    let df = n - 1;
    Ok(StatReport {
        n,
        mean_a: mean(a),
        mean_b: mean(b),
        mean_diff,
        sd_diff: sd,
        sem_diff: sem,
        t,
        df,
        p: student_t_two_sided_p(t, df as f64),
        cohens_d: mean_diff / sd,
        bf01: None,
        bf_scale: None,
    })
}

/// Paired test augmented with the JZS BF₀₁ for the same t.
pub fn parity_test(a: &[f64], b: &[f64], scale: f64) -> Result<StatReport> {
    let mut report = paired_t(a, b)?;
    report.bf01 = Some(jzs_bf01(report.t, report.n, scale)?);
    report.bf_scale = Some(scale);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PearsonResult {
    pub n: usize,
    pub r: f64,
    pub p: f64,
}

/// Pearson r with a two-sided p from `t = r·√((n − 2)/(1 − r²))`.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<PearsonResult> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("correlation needs n ≥ 3, got {n}")));
    }
    let r = crate::metrics::pearson(x, y).ok_or(Error::ZeroVariance("correlation input"))?;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt();
        student_t_two_sided_p(t, n as f64 - 2.0)
    };
    Ok(PearsonResult { n, r, p })
}

/// Log of the JZS integrand over `g` for a one-sample/paired t, already
/// divided by the null likelihood. `g` carries the inverse-gamma(½, r²/2)
/// prior that makes the effect size Cauchy(0, r).
pub fn jzs_log_integrand(g: f64, t: f64, n: usize, scale: f64) -> f64 {
    let nu = n as f64 - 1.0;
    let big_n = n as f64;
    let ng = 1.0 + big_n * g;
    let half_nu1 = 0.5 * (nu + 1.0);
    -0.5 * ng.ln() - half_nu1 * (1.0 + t * t / (ng * nu)).ln() + half_nu1 * (1.0 + t * t / nu).ln() + scale.ln()
        - 0.5 * (2.0 * std::f64::consts::PI).ln()
        - 1.5 * g.ln()
        - scale * scale / (2.0 * g)
}

/// BF₁₀ from the JZS integral, by adaptive quadrature on `u ∈ (0, 1)` with
/// `g = u / (1 − u)`.
pub fn jzs_bf10(t: f64, n: usize, scale: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("Bayes factor needs n ≥ 2, got {n}")));
    }
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::InvalidArgument(format!("prior scale must be positive, got {scale}")));
    }
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("t must be finite, got {t}")));
    }
    let integrand = |u: f64| {
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - u;
        let g = u / one_minus;
        (jzs_log_integrand(g, t, n, scale) - 2.0 * one_minus.ln()).exp()
    };
    let r = quadrature::integrate(integrand, 0.0, 1.0, BF_REL_TOL * 0.1, 0.0, BF_MAX_SEGMENTS)?;
    if r.value.is_nan() || r.value <= 0.0 {
        return Err(Error::Quadrature { estimate: r.value, error: r.error });
    }
    Ok(r.value)
}

/// BF₀₁ = 1 / BF₁₀. Values above 1 favour the null.
pub fn jzs_bf01(t: f64, n: usize, scale: f64) -> Result<f64> {
    Ok(1.0 / jzs_bf10(t, n, scale)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceTier {
    FavoursAlternative,
    Anecdotal,
    Moderate,
    Strong,
    VeryStrong,
    Decisive,
}

impl EvidenceTier {
    pub fn label(self) -> &'static str {
        match self {
            EvidenceTier::FavoursAlternative => "favours alternative",
            EvidenceTier::Anecdotal => "anecdotal",
            EvidenceTier::Moderate => "moderate",
            EvidenceTier::Strong => "strong",
            EvidenceTier::VeryStrong => "very strong",
            EvidenceTier::Decisive => "decisive",
        }
    }
}

impl std::fmt::Display for EvidenceTier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Evidence tier for BF₀₁ with inclusive lower edges at 1, 3, 10, 30, 100.
pub fn jeffreys_tier(bf01: f64) -> EvidenceTier {
    match bf01 {
        b if b < 1.0 => EvidenceTier::FavoursAlternative,
        b if b < 3.0 => EvidenceTier::Anecdotal,
        b if b < 10.0 => EvidenceTier::Moderate,
        b if b < 30.0 => EvidenceTier::Strong,
        b if b < 100.0 => EvidenceTier::VeryStrong,
        _ => EvidenceTier::Decisive,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileBins {
    /// 25th, 50th and 75th percentiles.
    pub edges: [f64; 3],
    /// Indices into the input, ascending within each bin.
    pub bins: [Vec<usize>; 4],
    /// Set when two or more edges coincide.
    pub degenerate: bool,
}

/// Percentile by linear interpolation between closest ranks
/// (position `q · (n − 1)` in the sorted sample).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Splits values into quartiles. A value equal to an edge goes to the lower
/// bin.
pub fn quartile_bins(values: &[f64]) -> Result<QuartileBins> {
    if values.len() < 4 {
        return Err(Error::InvalidArgument(format!("quartiles need n ≥ 4, got {}", values.len())));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let edges = [percentile_sorted(&sorted, 0.25), percentile_sorted(&sorted, 0.50), percentile_sorted(&sorted, 0.75)];
    let mut bins: [Vec<usize>; 4] = Default::default();
    for (i, &v) in values.iter().enumerate() {
        let q = edges.iter().position(|&e| v <= e).unwrap_or(3);
        bins[q].push(i);
    }
    Ok(QuartileBins { edges, bins, degenerate: edges[0] == edges[1] || edges[1] == edges[2] })
}
