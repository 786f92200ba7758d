//! COCO-style instance annotation parsing.
//!
//! Only `images[].{id,width,height}`, `categories[].{id,name}` and
//! `annotations[].{id,image_id,category_id,area,segmentation,iscrowd}` are
//! read; any other key is ignored.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masks::rle;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum MaskSpec {
    /// One or more polygons, each a flat `[x0, y0, x1, y1, ...]` list.
    Polygons(Vec<Vec<f64>>),
    /// Uncompressed column-major run lengths, starting with background.
    Rle { counts: Vec<u32> },
    /// COCO's compact string encoding of run lengths.
    CompressedRle { counts: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Annotation {
    pub id: u64,
    pub category_id: u64,
    pub category_name: Option<String>,
    pub area: f64,
    pub mask: MaskSpec,
    pub iscrowd: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotatedImage {
    pub image_id: u64,
    pub orig_width: usize,
    pub orig_height: usize,
    pub annotations: Vec<Annotation>,
}

#[derive(Deserialize)]
struct RawFile {
    images: Vec<RawImage>,
    annotations: Vec<RawAnnotation>,
    #[serde(default)]
    categories: Option<Vec<RawCategory>>,
}

#[derive(Deserialize)]
struct RawImage {
    id: u64,
    width: usize,
    height: usize,
}

#[derive(Deserialize)]
struct RawCategory {
    id: u64,
    name: String,
}

#[derive(Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: u64,
    category_id: u64,
    area: f64,
    segmentation: RawSegmentation,
    #[serde(default)]
    iscrowd: RawFlag,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSegmentation {
    Polygons(Vec<Vec<f64>>),
    Rle { counts: RawCounts, size: [usize; 2] },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawCounts {
    Runs(Vec<u32>),
    Compressed(String),
}

#[derive(Deserialize, Default)]
#[serde(untagged)]
enum RawFlag {
    #[default]
    Missing,
    Bool(bool),
    Int(u8),
}

impl RawFlag {
    fn is_set(&self) -> bool {
        match self {
            RawFlag::Missing => false,
            RawFlag::Bool(b) => *b,
            RawFlag::Int(i) => *i != 0,
        }
    }
}

/// Parses a COCO-style annotation document into per-image records, sorted
/// by image id. Images without annotations are kept with an empty list.
pub fn parse_annotations(json_text: &str) -> Result<Vec<AnnotatedImage>> {
    let raw: RawFile = serde_json::from_str(json_text)?;
    let categories: Option<BTreeMap<u64, String>> =
        raw.categories.map(|cs| cs.into_iter().map(|c| (c.id, c.name)).collect());

    let mut images: BTreeMap<u64, AnnotatedImage> = BTreeMap::new();
    for (index, img) in raw.images.into_iter().enumerate() {
        if img.width == 0 || img.height == 0 {
            return Err(Error::Schema(format!("images[{index}] (id {}) has zero size", img.id)));
        }
        let previous = images.insert(
            img.id,
            AnnotatedImage {
                image_id: img.id,
                orig_width: img.width,
                orig_height: img.height,
                annotations: Vec::new(),
            },
        );
        if previous.is_some() {
            return Err(Error::Schema(format!("images[{index}] duplicates id {}", img.id)));
        }
    }

    for (index, ann) in raw.annotations.into_iter().enumerate() {
        let image = images.get_mut(&ann.image_id).ok_or_else(|| {
            Error::Schema(format!("annotations[{index}] (id {}) references unknown image id {}", ann.id, ann.image_id))
        })?;
        if !ann.area.is_finite() || ann.area <= 0.0 {
            return Err(Error::Invariant(format!(
                "annotations[{index}] (id {}) has non-positive area {}",
                ann.id, ann.area
            )));
        }
        let category_name = match &categories {
            Some(map) => Some(map.get(&ann.category_id).cloned().ok_or_else(|| {
                Error::Schema(format!(
                    "annotations[{index}] (id {}) has undeclared category {}",
                    ann.id, ann.category_id
                ))
            })?),
            None => None,
        };
        let mask = match ann.segmentation {
            RawSegmentation::Polygons(polys) => {
                for (p, poly) in polys.iter().enumerate() {
                    if poly.len() < 6 || poly.len() % 2 != 0 {
                        return Err(Error::Invariant(format!(
                            "annotations[{index}] (id {}) polygon {p} has {} coordinates; need an even count ≥ 6",
                            ann.id,
                            poly.len()
                        )));
                    }
                    if poly.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Invariant(format!(
                            "annotations[{index}] (id {}) polygon {p} has non-finite coordinates",
                            ann.id
                        )));
                    }
                }
                if polys.is_empty() {
                    return Err(Error::Invariant(format!(
                        "annotations[{index}] (id {}) has an empty polygon list",
                        ann.id
                    )));
                }
                MaskSpec::Polygons(polys)
            }
            RawSegmentation::Rle { counts, size: [h, w] } => {
                if (h, w) != (image.orig_height, image.orig_width) {
                    return Err(Error::Invariant(format!(
                        "annotations[{index}] (id {}) RLE size {h}x{w} differs from image {}x{}",
                        ann.id, image.orig_height, image.orig_width
                    )));
                }
                let (spec, runs) = match counts {
                    RawCounts::Runs(runs) => (MaskSpec::Rle { counts: runs.clone() }, runs),
                    RawCounts::Compressed(s) => {
                        let runs = rle::decompress_counts(&s)
                            .map_err(|e| Error::Invariant(format!("annotations[{index}] (id {}): {e}", ann.id)))?;
                        (MaskSpec::CompressedRle { counts: s }, runs)
                    }
                };
                let total: u64 = runs.iter().map(|&c| c as u64).sum();
                if total != (w * h) as u64 {
                    return Err(Error::Invariant(format!(
                        "annotations[{index}] (id {}) RLE counts sum to {total}, expected {}",
                        ann.id,
                        w * h
                    )));
                }
                spec
            }
        };
        image.annotations.push(Annotation {
            id: ann.id,
            category_id: ann.category_id,
            category_name,
            area: ann.area,
            mask,
            iscrowd: ann.iscrowd.is_set(),
        });
    }

    Ok(images.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "images": [{"id": 7, "width": 10, "height": 8, "file_name": "x.jpg"}],
        "annotations": [{"id": 1, "image_id": 7, "category_id": 1, "area": 12.0,
                         "bbox": [0, 0, 4, 3], "iscrowd": 0,
                         "segmentation": [[1, 1, 5, 1, 5, 4, 1, 4]]}],
        "categories": [{"id": 1, "name": "person", "supercategory": "person"}]
    }"#;

    #[test]
    fn minimal_file() {
        let imgs = parse_annotations(MINIMAL).unwrap();
        assert_eq!(imgs.len(), 1);
        assert_eq!(imgs[0].image_id, 7);
        assert_eq!(imgs[0].annotations.len(), 1);
        assert_eq!(imgs[0].annotations[0].category_name.as_deref(), Some("person"));
        assert!(matches!(imgs[0].annotations[0].mask, MaskSpec::Polygons(_)));
    }

    #[test]
    fn rle_sum_mismatch_is_rejected() {
        let text = r#"{"images": [{"id": 1, "width": 2, "height": 5}],
            "annotations": [{"id": 1, "image_id": 1, "category_id": 3, "area": 3,
                             "iscrowd": 1, "segmentation": {"counts": [2, 3, 4], "size": [5, 2]}}]}"#;
        assert!(matches!(parse_annotations(text), Err(Error::Invariant(m)) if m.contains("sum to 9")));
    }

    #[test]
    fn unknown_image_is_rejected() {
        let text = r#"{"images": [],
            "annotations": [{"id": 1, "image_id": 4, "category_id": 3, "area": 3,
                             "segmentation": [[0,0,1,0,1,1]]}]}"#;
        assert!(matches!(parse_annotations(text), Err(Error::Schema(m)) if m.contains("unknown image id 4")));
    }

    #[test]
    fn missing_key_is_rejected() {
        let text = r#"{"images": [{"id": 1, "width": 2, "height": 2}],
            "annotations": [{"id": 1, "image_id": 1, "area": 3, "segmentation": [[0,0,1,0,1,1]]}]}"#;
        assert!(matches!(parse_annotations(text), Err(Error::Json(_))));
    }

    #[test]
    fn odd_polygon_is_rejected() {
        let text = r#"{"images": [{"id": 1, "width": 2, "height": 2}],
            "annotations": [{"id": 1, "image_id": 1, "category_id": 1, "area": 3, "segmentation": [[0,0,1,0,1]]}]}"#;
        assert!(matches!(parse_annotations(text), Err(Error::Invariant(_))));
    }
}
