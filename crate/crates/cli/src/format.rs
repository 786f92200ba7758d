//! Number formatting and small image writers shared by every subcommand.

/// Significant digits used for every decimal written to CSV.
pub const SIGNIFICANT_DIGITS: usize = 9;

/// Fixed-point decimal with nine significant digits, e.g. `0.123456789`,
/// `1234.56789`, `-0.000012345678`. Integers beyond nine digits keep all
/// their digits. `NaN` and infinities are written as `NaN`, `inf`, `-inf`.
pub fn fmt9(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    // the exponent of the correctly rounded scientific form fixes the
    // number of decimals
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt9).unwrap_or_default()
}

/// 8-bit binary PGM (`P5`). Values are clamped to [0, 1] and scaled to
/// 0‥255 with round-half-away-from-zero.
pub fn encode_pgm(grid: &gaze_align_core::Grid2D) -> Vec<u8> {
    let (w, h) = grid.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(grid.values().iter().map(|&v| {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        (v * 255.0).round() as u8
    }));
    out
}
