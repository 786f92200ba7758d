//! Animacy, object-size and sparsity analyses over attention or density
//! maps. Per-image work is split from the aggregation so callers can run the
//! former in parallel; aggregation sorts by image id before testing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masks::{region_density, CategoryClass, RegionTag, Scene, SizeBin};
use crate::stats::{mean, paired_t, sample_sd, StatReport};
use crate::tensor_io::Grid2D;

/// Shannon entropy in bits of the map after clipping negatives to zero and
/// normalising to unit sum.
pub fn entropy_bits(map: &Grid2D) -> Result<f64> {
    let total: f64 = map.values().iter().map(|&v| v.max(0.0)).sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::ConstantMap("map has no positive mass"));
    }
    let h = map.values().iter().map(|&v| v.max(0.0) / total).filter(|&p| p > 0.0).map(|p| -p * p.log2()).sum::<f64>();
    Ok(h.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnimacyRecord {
    pub image_id: u64,
    pub animate: f64,
    pub inanimate: f64,
    pub animate_pixels: usize,
    pub inanimate_pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnimacySkip {
    ExcludedCategory,
    NoAnimate,
    NoInanimate,
    /// One class vanished from the downsampled canvas.
    EmptyRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AnimacyDecision {
    Kept(AnimacyRecord),
    Skipped { image_id: u64, reason: AnimacySkip },
}

/// Animate vs inanimate region densities for one image. Images holding any
/// excluded category are dropped whole.
pub fn animacy_record(attention: &Grid2D, scene: &Scene) -> Result<AnimacyDecision> {
    let skip = |reason| Ok(AnimacyDecision::Skipped { image_id: scene.image_id, reason });
    let classes = scene.classes();
    if classes.contains(&CategoryClass::Excluded) {
        return skip(AnimacySkip::ExcludedCategory);
    }
    if !classes.contains(&CategoryClass::Animate) {
        return skip(AnimacySkip::NoAnimate);
    }
    if !classes.contains(&CategoryClass::Inanimate) {
        return skip(AnimacySkip::NoInanimate);
    }
    let animate = scene.labels_of(CategoryClass::Animate);
    let inanimate = scene.labels_of(CategoryClass::Inanimate);
    let labels = &scene.canvas.down;
    let a = region_density(attention, labels, RegionTag::Animate, |l| animate.contains(&l));
    let b = region_density(attention, labels, RegionTag::Inanimate, |l| inanimate.contains(&l));
    match (a, b) {
        (Ok(a), Ok(b)) => Ok(AnimacyDecision::Kept(AnimacyRecord {
            image_id: scene.image_id,
            animate: a.density,
            inanimate: b.density,
            animate_pixels: a.pixel_area,
            inanimate_pixels: b.pixel_area,
        })),
        (Err(Error::Empty(_)), _) | (_, Err(Error::Empty(_))) => skip(AnimacySkip::EmptyRegion),
        (Err(e), _) | (_, Err(e)) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimacyOutcome {
    pub records: Vec<AnimacyRecord>,
    pub skipped: BTreeMap<String, usize>,
    /// Animate minus inanimate.
    pub test: StatReport,
}

fn skip_key(reason: AnimacySkip) -> String {
    serde_json::to_value(reason).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

pub fn summarise_animacy(decisions: impl IntoIterator<Item = AnimacyDecision>) -> Result<AnimacyOutcome> {
    let mut records = Vec::new();
    let mut skipped = BTreeMap::new();
    for d in decisions {
        match d {
            AnimacyDecision::Kept(r) => records.push(r),
            AnimacyDecision::Skipped { reason, .. } => *skipped.entry(skip_key(reason)).or_insert(0) += 1,
        }
    }
    if records.is_empty() {
        return Err(Error::Empty("no image has both animate and inanimate objects".into()));
    }
    records.sort_by_key(|r| r.image_id);
    let a: Vec<f64> = records.iter().map(|r| r.animate).collect();
    let b: Vec<f64> = records.iter().map(|r| r.inanimate).collect();
    let test = paired_t(&a, &b)?;
    Ok(AnimacyOutcome { records, skipped, test })
}

pub fn animacy_analysis<'a>(items: impl IntoIterator<Item = (&'a Grid2D, &'a Scene)>) -> Result<AnimacyOutcome> {
    let decisions = items.into_iter().map(|(g, s)| animacy_record(g, s)).collect::<Result<Vec<_>>>()?;
    summarise_animacy(decisions)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeRecord {
    pub image_id: u64,
    pub small: Option<f64>,
    pub medium: Option<f64>,
    pub large: Option<f64>,
    pub objects_used: usize,
    /// Objects with no visible pixel left on the downsampled canvas.
    pub objects_dropped: usize,
}

impl SizeRecord {
    pub fn bin(&self, bin: SizeBin) -> Option<f64> {
        match bin {
            SizeBin::Small => self.small,
            SizeBin::Medium => self.medium,
            SizeBin::Large => self.large,
        }
    }
}

pub const MIN_OBJECTS_FOR_SIZE: usize = 2;

/// Mean object density per size bin for one image; `None` when the image has
/// fewer than two annotated objects.
pub fn size_record(attention: &Grid2D, scene: &Scene) -> Result<Option<SizeRecord>> {
    if scene.objects.len() < MIN_OBJECTS_FOR_SIZE {
        return Ok(None);
    }
    let mut per_bin: BTreeMap<SizeBin, Vec<f64>> = BTreeMap::new();
    let mut dropped = 0;
    for obj in &scene.objects {
        match region_density(attention, &scene.canvas.down, RegionTag::Object(obj.label), |l| l == obj.label) {
            Ok(d) => per_bin.entry(obj.size_bin).or_default().push(d.density),
            Err(Error::Empty(_)) => dropped += 1,
            Err(e) => return Err(e),
        }
    }
    let avg = |b| per_bin.get(&b).map(|v| mean(v));
    Ok(Some(SizeRecord {
        image_id: scene.image_id,
        small: avg(SizeBin::Small),
        medium: avg(SizeBin::Medium),
        large: avg(SizeBin::Large),
        objects_used: per_bin.values().map(Vec::len).sum(),
        objects_dropped: dropped,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeOutcome {
    pub records: Vec<SizeRecord>,
    pub images_excluded: usize,
    pub objects_dropped: usize,
    /// Mean density per bin over images that have that bin.
    pub bin_means: BTreeMap<SizeBin, f64>,
    /// Small minus large, over images containing both.
    pub test: StatReport,
}

pub fn summarise_size(records: impl IntoIterator<Item = Option<SizeRecord>>) -> Result<SizeOutcome> {
    let mut kept = Vec::new();
    let mut excluded = 0;
    for r in records {
        match r {
            Some(r) => kept.push(r),
            None => excluded += 1,
        }
    }
    kept.sort_by_key(|r| r.image_id);
    let paired: Vec<(f64, f64)> = kept.iter().filter_map(|r| Some((r.small?, r.large?))).collect();
    if paired.is_empty() {
        return Err(Error::Empty("no image has both small and large objects".into()));
    }
    let (s, l): (Vec<f64>, Vec<f64>) = paired.into_iter().unzip();
    let test = paired_t(&s, &l)?;
    let mut bin_means = BTreeMap::new();
    for bin in [SizeBin::Small, SizeBin::Medium, SizeBin::Large] {
        let v: Vec<f64> = kept.iter().filter_map(|r| r.bin(bin)).collect();
        if !v.is_empty() {
            bin_means.insert(bin, mean(&v));
        }
    }
    Ok(SizeOutcome {
        objects_dropped: kept.iter().map(|r| r.objects_dropped).sum(),
        records: kept,
        images_excluded: excluded,
        bin_means,
        test,
    })
}

pub fn size_analysis<'a>(items: impl IntoIterator<Item = (&'a Grid2D, &'a Scene)>) -> Result<SizeOutcome> {
    let records = items.into_iter().map(|(g, s)| size_record(g, s)).collect::<Result<Vec<_>>>()?;
    summarise_size(records)
}

/// Scene clutter by annotated-object count: 1–3, 4–6, 7–10, more than 10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClutterBin {
    #[serde(rename = "1-3")]
    Sparse,
    #[serde(rename = "4-6")]
    Moderate,
    #[serde(rename = "7-10")]
    Busy,
    #[serde(rename = ">10")]
    Cluttered,
}

impl ClutterBin {
    pub fn label(self) -> &'static str {
        match self {
            ClutterBin::Sparse => "1-3",
            ClutterBin::Moderate => "4-6",
            ClutterBin::Busy => "7-10",
            ClutterBin::Cluttered => ">10",
        }
    }
}

/// `None` for images without objects.
pub fn clutter_bin(objects: usize) -> Option<ClutterBin> {
    match objects {
        0 => None,
        1..=3 => Some(ClutterBin::Sparse),
        4..=6 => Some(ClutterBin::Moderate),
        7..=10 => Some(ClutterBin::Busy),
        _ => Some(ClutterBin::Cluttered),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyRecord {
    pub image_id: u64,
    pub entropy_bits: f64,
    pub objects: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample sd; zero when `n = 1`.
    pub sd: f64,
    pub sem: f64,
}

pub fn group_summary(xs: &[f64]) -> Option<GroupSummary> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len();
    let sd = if n > 1 { sample_sd(xs) } else { 0.0 };
    Some(GroupSummary { n, mean: mean(xs), sd, sem: sd / (n as f64).sqrt() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyOutcome {
    pub records: Vec<EntropyRecord>,
    pub overall: GroupSummary,
    pub by_clutter: BTreeMap<ClutterBin, GroupSummary>,
}

pub fn summarise_entropy(records: impl IntoIterator<Item = EntropyRecord>) -> Result<EntropyOutcome> {
    let mut records: Vec<EntropyRecord> = records.into_iter().collect();
    records.sort_by_key(|r| r.image_id);
    let all: Vec<f64> = records.iter().map(|r| r.entropy_bits).collect();
    let overall = group_summary(&all).ok_or_else(|| Error::Empty("no maps to summarise".into()))?;
    let mut groups: BTreeMap<ClutterBin, Vec<f64>> = BTreeMap::new();
    for r in &records {
        if let Some(bin) = r.objects.and_then(clutter_bin) {
            groups.entry(bin).or_default().push(r.entropy_bits);
        }
    }
    let by_clutter = groups.into_iter().filter_map(|(k, v)| group_summary(&v).map(|s| (k, s))).collect();
    Ok(EntropyOutcome { records, overall, by_clutter })
}
