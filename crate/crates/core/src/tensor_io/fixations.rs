//! Per-observer fixation records and their rescaling to the model grid.
//!
//! File schema:
//!
//! ```json
//! {"images": [{"image_id": 42, "width": 640, "height": 480,
//!              "observers": [{"worker_id": "a", "fixations": [[x, y], ...]}, ...]}]}
//! ```
//!
//! Coordinates are `(x, y)` in original-image pixels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
}

impl Fixation {
    /// Integer pixel containing this fixation (floor binning).
    pub fn pixel(&self) -> (usize, usize) {
        (self.x.floor() as usize, self.y.floor() as usize)
    }
}

/// Fixations for one image in target-resolution pixel space, partitioned
/// by observer.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationSet {
    pub image_id: u64,
    pub width: usize,
    pub height: usize,
    pub observers: Vec<Vec<Fixation>>,
}

impl FixationSet {
    pub fn new(image_id: u64, width: usize, height: usize, observers: Vec<Vec<Fixation>>) -> Result<Self> {
        if observers.is_empty() {
            return Err(Error::Empty(format!("image {image_id} has no observers")));
        }
        for (o, fixes) in observers.iter().enumerate() {
            for (k, f) in fixes.iter().enumerate() {
                if !(f.x >= 0.0 && f.x < width as f64 && f.y >= 0.0 && f.y < height as f64) {
                    return Err(Error::OutOfBounds(format!(
                        "image {image_id} observer {o} fixation {k} at ({}, {}) outside {width}x{height}",
                        f.x, f.y
                    )));
                }
            }
        }
        Ok(Self { image_id, width, height, observers })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pooled(&self) -> impl Iterator<Item = &Fixation> {
        self.observers.iter().flatten()
    }

    pub fn fixation_count(&self) -> usize {
        self.observers.iter().map(Vec::len).sum()
    }

    /// Distinct fixated pixels across all observers, in row-major order.
    pub fn fixated_pixels(&self) -> Vec<(usize, usize)> {
        unique_pixels(self.pooled())
    }

    /// Distinct fixated pixels for one observer, in row-major order.
    pub fn observer_pixels(&self, observer: usize) -> Vec<(usize, usize)> {
        unique_pixels(self.observers[observer].iter())
    }
}

fn unique_pixels<'a>(fixes: impl Iterator<Item = &'a Fixation>) -> Vec<(usize, usize)> {
    let mut px: Vec<(usize, usize)> = fixes.map(|f| f.pixel()).map(|(x, y)| (y, x)).collect();
    px.sort_unstable();
    px.dedup();
    px.into_iter().map(|(y, x)| (x, y)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawObserver {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_id: Option<serde_json::Value>,
    pub fixations: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawFixationRecord {
    pub image_id: u64,
    pub width: usize,
    pub height: usize,
    pub observers: Vec<RawObserver>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawFixationFile {
    pub images: Vec<RawFixationRecord>,
}

/// Scales one coordinate from `orig` to `target` resolution. Values that
/// land on or past the far edge are clamped to the last valid pixel.
fn scale_axis(v: f64, orig: usize, target: usize) -> f64 {
    let scaled = v * target as f64 / orig as f64;
    if scaled >= target as f64 {
        (target - 1) as f64
    } else if scaled < 0.0 {
        0.0
    } else {
        scaled
    }
}

/// Rescales raw per-observer `(x, y)` coordinates from `orig_dims` to
/// `target_dims` (both `(width, height)`), preserving observer order.
pub fn scale_fixations(
    image_id: u64,
    observers: &[Vec<[f64; 2]>],
    orig_dims: (usize, usize),
    target_dims: (usize, usize),
) -> Result<FixationSet> {
    let (ow, oh) = orig_dims;
    let (tw, th) = target_dims;
    if ow == 0 || oh == 0 || tw == 0 || th == 0 {
        return Err(Error::InvalidArgument(format!("dimensions must be positive: orig {ow}x{oh}, target {tw}x{th}")));
    }
    if observers.is_empty() {
        return Err(Error::Empty(format!("image {image_id} has no observers")));
    }
    let mut scaled = Vec::with_capacity(observers.len());
    for (o, fixes) in observers.iter().enumerate() {
        if fixes.is_empty() {
            return Err(Error::Empty(format!("image {image_id} observer {o} has no fixations")));
        }
        let mut out = Vec::with_capacity(fixes.len());
        for (k, &[x, y]) in fixes.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "image {image_id} observer {o} fixation {k} is non-finite"
                )));
            }
            out.push(Fixation { x: scale_axis(x, ow, tw), y: scale_axis(y, oh, th) });
        }
        scaled.push(out);
    }
    FixationSet::new(image_id, tw, th, scaled)
}

/// Parses a fixation file and rescales every image to `target_dims`.
/// Output is sorted by image id.
pub fn parse_fixations(json_text: &str, target_dims: (usize, usize)) -> Result<Vec<FixationSet>> {
    let raw: RawFixationFile = serde_json::from_str(json_text)?;
    let mut sets = Vec::with_capacity(raw.images.len());
    for (index, rec) in raw.images.into_iter().enumerate() {
        let observers: Vec<Vec<[f64; 2]>> = rec.observers.into_iter().map(|o| o.fixations).collect();
        let set = scale_fixations(rec.image_id, &observers, (rec.width, rec.height), target_dims)
            .map_err(|e| Error::Schema(format!("images[{index}]: {e}")))?;
        sets.push(set);
    }
    sets.sort_by_key(|s| s.image_id);
    if let Some(w) = sets.windows(2).find(|w| w[0].image_id == w[1].image_id) {
        return Err(Error::Schema(format!("duplicate image id {}", w[0].image_id)));
    }
    Ok(sets)
}
