//! Synthetic image/target pairs: one bright blob per image and a Gaussian
//! target density centred on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gaze_align_core::Grid2D;

use crate::error::Result;
use crate::model::TinyViTConfig;
use crate::train::Sample;

pub const BLOB_SIGMA: f64 = 3.0;
pub const TARGET_SIGMA: f64 = 4.0;

pub fn gaussian_blob(size: usize, cx: f64, cy: f64, sigma: f64) -> Grid2D {
    Grid2D::from_fn(size, size, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
    })
    .expect("size is positive")
}

/// `n` seeded samples at the configuration's image size and channel count.
pub fn synthetic_blobs(config: &TinyViTConfig, n: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = config.image_size;
    let margin = (s as f64 * 0.125).max(1.0);
    (0..n)
        .map(|_| {
            let cx = rng.gen_range(margin..s as f64 - margin);
            let cy = rng.gen_range(margin..s as f64 - margin);
            let blob = gaussian_blob(s, cx, cy, BLOB_SIGMA);
            let tint: Vec<f64> = (0..config.channels).map(|_| rng.gen_range(0.6..1.0)).collect();
            let mut image = Vec::with_capacity(config.image_len());
            for &t in &tint {
                for &b in blob.values() {
                    image.push(0.1 + rng.gen_range(0.0..0.05) + t * b);
                }
            }
            let (target, _) = gaussian_blob(s, cx, cy, TARGET_SIGMA).min_max_normalised();
            Ok(Sample { image, target })
        })
        .collect()
}
