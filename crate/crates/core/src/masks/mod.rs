//! Instance mask decoding, painter's-algorithm compositing, and region
//! attention densities.

pub mod categories;
pub mod polygon;
pub mod rle;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_io::{AnnotatedImage, Grid2D, MaskSpec};

pub use categories::{CategoryClass, CategoryTable};
pub use polygon::{polygon_area, rasterize_polygon};
pub use rle::{decode_rle, encode_rle};

/// Multiplier applied to mean per-pixel attention in region densities.
pub const DENSITY_SCALE: f64 = 1e4;
/// Relative disagreement between declared and decoded area that gets flagged.
pub const AREA_DISAGREEMENT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn union_with(&mut self, other: &BinaryMask) {
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn to_grid(&self) -> Grid2D {
        Grid2D::new(self.width, self.height, self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
            .expect("mask dims are positive")
    }
}

/// Integer label image; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelGrid {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelGrid {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, labels: vec![0; width * height] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn count(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn to_grid(&self) -> Grid2D {
        Grid2D::new(self.width, self.height, self.labels.iter().map(|&l| l as f64).collect())
            .expect("label dims are positive")
    }

    /// Nearest-neighbour resample; target pixel `i` reads source index
    /// `⌊(i + 0.5) · src/dst⌋`.
    pub fn downsample_nearest(&self, (tw, th): (usize, usize)) -> LabelGrid {
        let sx = self.width as f64 / tw as f64;
        let sy = self.height as f64 / th as f64;
        let xs: Vec<usize> = (0..tw).map(|i| nearest_source(i, sx, self.width)).collect();
        let mut out = LabelGrid::new(tw, th);
        for j in 0..th {
            let src_y = nearest_source(j, sy, self.height);
            for (i, &src_x) in xs.iter().enumerate() {
                out.labels[j * tw + i] = self.get(src_x, src_y);
            }
        }
        out
    }
}

/// Source index for nearest-neighbour resampling of target index `i`.
pub fn nearest_source(i: usize, scale: f64, src_len: usize) -> usize {
    (((i as f64 + 0.5) * scale).floor() as usize).min(src_len - 1)
}

/// Painted label canvas at original resolution plus its downsampled copy.
/// Label `k ≥ 1` refers to `annotation_ids[k - 1]`; labels follow paint order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelCanvas {
    pub full: LabelGrid,
    pub down: LabelGrid,
    pub annotation_ids: Vec<u64>,
}

impl LabelCanvas {
    pub fn label_of(&self, annotation_id: u64) -> Option<u32> {
        self.annotation_ids.iter().position(|&id| id == annotation_id).map(|p| p as u32 + 1)
    }
}

/// One mask to composite: annotation id, declared area, decoded mask.
#[derive(Debug, Clone, Copy)]
pub struct PaintItem<'a> {
    pub annotation_id: u64,
    pub area: f64,
    pub mask: &'a BinaryMask,
}

/// Paints masks largest-first so smaller objects overwrite larger ones,
/// then downsamples with nearest-neighbour sampling. Ties in area are
/// broken by annotation id, so the result does not depend on input order.
pub fn composite_painter(items: &[PaintItem<'_>], orig: (usize, usize), target: (usize, usize)) -> Result<LabelCanvas> {
    if let Some(bad) = items.iter().find(|it| it.mask.dims() != orig) {
        return Err(Error::DimensionMismatch(format!(
            "mask for annotation {} is {:?}, canvas is {orig:?}",
            bad.annotation_id,
            bad.mask.dims()
        )));
    }
    let mut order: Vec<&PaintItem> = items.iter().collect();
    order.sort_by(|a, b| b.area.total_cmp(&a.area).then(a.annotation_id.cmp(&b.annotation_id)));

    let mut full = LabelGrid::new(orig.0, orig.1);
    for (k, item) in order.iter().enumerate() {
        let label = k as u32 + 1;
        for (dst, &on) in full.labels.iter_mut().zip(&item.mask.bits) {
            if on {
                *dst = label;
            }
        }
    }
    let down = full.downsample_nearest(target);
    Ok(LabelCanvas { full, down, annotation_ids: order.iter().map(|it| it.annotation_id).collect() })
}

/// Decodes an annotation's mask at the image's original resolution.
/// Degenerate polygons contribute nothing; the second value counts them.
pub fn decode_mask(spec: &MaskSpec, width: usize, height: usize) -> Result<(BinaryMask, usize)> {
    match spec {
        MaskSpec::Polygons(polys) => {
            let mut mask = BinaryMask::empty(width, height);
            let mut degenerate = 0;
            for poly in polys {
                match rasterize_polygon(poly, width, height) {
                    Ok(m) => mask.union_with(&m),
                    Err(Error::DegeneratePolygon) => degenerate += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok((mask, degenerate))
        }
        MaskSpec::Rle { counts } => Ok((decode_rle(counts, width, height)?, 0)),
        MaskSpec::CompressedRle { counts } => Ok((decode_rle(&rle::decompress_counts(counts)?, width, height)?, 0)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeBin {
    Small,
    Medium,
    Large,
}

pub const SMALL_MAX_AREA: f64 = 1024.0;
pub const MEDIUM_MAX_AREA: f64 = 9216.0;

/// `< 1024` small, `[1024, 9216)` medium, `≥ 9216` large (px² at original
/// resolution).
pub fn size_bin(area: f64) -> SizeBin {
    if area < SMALL_MAX_AREA {
        SizeBin::Small
    } else if area < MEDIUM_MAX_AREA {
        SizeBin::Medium
    } else {
        SizeBin::Large
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "label")]
pub enum RegionTag {
    Animate,
    Inanimate,
    Object(u32),
    Background,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDensity {
    pub region: RegionTag,
    /// Mean attention per pixel × 10⁴.
    pub density: f64,
    pub pixel_area: usize,
}

/// `(Σ attention over selected pixels / pixel count) × 10⁴`.
pub fn region_density(
    attention: &Grid2D,
    labels: &LabelGrid,
    region: RegionTag,
    select: impl Fn(u32) -> bool,
) -> Result<RegionDensity> {
    if attention.dims() != labels.dims() {
        return Err(Error::DimensionMismatch(format!(
            "attention {:?} vs canvas {:?}",
            attention.dims(),
            labels.dims()
        )));
    }
    let (mut sum, mut area) = (0.0, 0usize);
    for (&a, &l) in attention.values().iter().zip(labels.labels()) {
        if select(l) {
            sum += a;
            area += 1;
        }
    }
    if area == 0 {
        return Err(Error::Empty(format!("region {region:?} has no pixels")));
    }
    Ok(RegionDensity { region, density: sum / area as f64 * DENSITY_SCALE, pixel_area: area })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneOptions {
    pub target: (usize, usize),
    pub include_crowd: bool,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self { target: (crate::fixation::DEFAULT_SIZE, crate::fixation::DEFAULT_SIZE), include_crowd: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneObject {
    pub annotation_id: u64,
    pub label: u32,
    pub category_id: u64,
    pub class: CategoryClass,
    /// Declared annotation area, used for size binning.
    pub area: f64,
    pub size_bin: SizeBin,
    pub decoded_area: usize,
    /// Visible pixels of this object on the downsampled canvas.
    pub down_area: usize,
    /// Declared and decoded areas differ by more than 5%.
    pub area_flagged: bool,
}

/// A painted image ready for the bias analyses.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: u64,
    pub canvas: LabelCanvas,
    pub objects: Vec<SceneObject>,
    pub crowd_skipped: usize,
    pub degenerate_polygons: usize,
}

impl Scene {
    pub fn classes(&self) -> BTreeSet<CategoryClass> {
        self.objects.iter().map(|o| o.class).collect()
    }

    /// Labels whose object belongs to `class`.
    pub fn labels_of(&self, class: CategoryClass) -> BTreeSet<u32> {
        self.objects.iter().filter(|o| o.class == class).map(|o| o.label).collect()
    }
}

/// Decodes, classifies and composites every annotation of one image.
pub fn build_scene(image: &AnnotatedImage, table: &CategoryTable, options: &SceneOptions) -> Result<Scene> {
    let (w, h) = (image.orig_width, image.orig_height);
    let mut decoded = Vec::new();
    let mut crowd_skipped = 0;
    let mut degenerate_polygons = 0;
    for ann in &image.annotations {
        if ann.iscrowd && !options.include_crowd {
            crowd_skipped += 1;
            continue;
        }
        let class = table.classify(ann.category_id)?;
        let (mask, degenerate) = decode_mask(&ann.mask, w, h)
            .map_err(|e| Error::Schema(format!("image {} annotation {}: {e}", image.image_id, ann.id)))?;
        degenerate_polygons += degenerate;
        decoded.push((ann, class, mask));
    }
    let items: Vec<PaintItem> =
        decoded.iter().map(|(ann, _, mask)| PaintItem { annotation_id: ann.id, area: ann.area, mask }).collect();
    let canvas = composite_painter(&items, (w, h), options.target)?;
    let mut objects: Vec<SceneObject> = decoded
        .iter()
        .map(|(ann, class, mask)| {
            let label = canvas.label_of(ann.id).expect("every painted annotation has a label");
            let decoded_area = mask.count();
            SceneObject {
                annotation_id: ann.id,
                label,
                category_id: ann.category_id,
                class: *class,
                area: ann.area,
                size_bin: size_bin(ann.area),
                decoded_area,
                down_area: canvas.down.count(label),
                area_flagged: (decoded_area as f64 - ann.area).abs() > AREA_DISAGREEMENT * ann.area,
            }
        })
        .collect();
    objects.sort_by_key(|o| o.label);
    Ok(Scene { image_id: image.image_id, canvas, objects, crowd_skipped, degenerate_polygons })
}
