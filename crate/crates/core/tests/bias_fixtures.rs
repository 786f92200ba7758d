mod oracles;

use gaze_align_core::bias::{
    animacy_analysis, animacy_record, clutter_bin, entropy_bits, size_analysis, size_record, AnimacyDecision,
    AnimacySkip, ClutterBin,
};
use gaze_align_core::masks::{build_scene, CategoryTable, Scene, SceneOptions, SizeBin};
use gaze_align_core::tensor_io::{AnnotatedImage, Annotation, MaskSpec};
use gaze_align_core::Grid2D;

const PERSON: u64 = 1;
const CAR: u64 = 3;
const TV: u64 = 72;

fn rect(id: u64, category_id: u64, x0: f64, y0: f64, x1: f64, y1: f64) -> Annotation {
    Annotation {
        id,
        category_id,
        category_name: None,
        area: (x1 - x0) * (y1 - y0),
        mask: MaskSpec::Polygons(vec![vec![x0, y0, x1, y0, x1, y1, x0, y1]]),
        iscrowd: false,
    }
}

fn scene(image_id: u64, size: usize, target: usize, annotations: Vec<Annotation>) -> Scene {
    let image = AnnotatedImage { image_id, orig_width: size, orig_height: size, annotations };
    let opts = SceneOptions { target: (target, target), include_crowd: false };
    build_scene(&image, &CategoryTable::coco_default(), &opts).unwrap()
}

/// Attention equal to the flat pixel index, times `scale`.
fn ramp(size: usize, scale: f64) -> Grid2D {
    Grid2D::from_fn(size, size, |x, y| (y * size + x) as f64 * scale).unwrap()
}

#[test]
fn animacy_densities_by_hand() {
    // person covers x, y ∈ 2..8 (mean index 4.5 + 20·4.5), car covers 10..20
    let s = scene(1, 20, 20, vec![rect(1, PERSON, 2.0, 2.0, 8.0, 8.0), rect(2, CAR, 10.0, 10.0, 20.0, 20.0)]);
    let AnimacyDecision::Kept(r) = animacy_record(&ramp(20, 1.0), &s).unwrap() else {
        panic!("image should be kept");
    };
    assert!((r.animate - 94.5e4).abs() < 1e-6);
    assert!((r.inanimate - 304.5e4).abs() < 1e-6);
    assert_eq!((r.animate_pixels, r.inanimate_pixels), (36, 100));
}

#[test]
fn animacy_skips_are_counted() {
    let base = || vec![rect(1, PERSON, 2.0, 2.0, 8.0, 8.0), rect(2, CAR, 10.0, 10.0, 20.0, 20.0)];
    let mut with_tv = base();
    with_tv.push(rect(3, TV, 0.0, 15.0, 5.0, 20.0));
    let scenes = vec![
        scene(1, 20, 20, base()),
        scene(2, 20, 20, with_tv),
        scene(3, 20, 20, vec![rect(4, CAR, 0.0, 0.0, 5.0, 5.0)]),
        scene(4, 20, 20, vec![rect(5, PERSON, 0.0, 0.0, 5.0, 5.0)]),
        // a one-pixel person disappears at 4×4
        scene(5, 20, 4, vec![rect(6, PERSON, 0.0, 0.0, 1.0, 1.0), rect(7, CAR, 5.0, 5.0, 20.0, 20.0)]),
        scene(6, 20, 20, base()),
    ];
    let maps: Vec<Grid2D> = scenes
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let side = s.canvas.down.dims().0;
            Grid2D::from_fn(side, side, |x, y| ((y * side + x) as f64 + 1.0) * (1.0 + k as f64 * 0.1) + (x % 3) as f64)
                .unwrap()
        })
        .collect();
    let reasons: Vec<Option<AnimacySkip>> = maps
        .iter()
        .zip(&scenes)
        .map(|(m, s)| match animacy_record(m, s).unwrap() {
            AnimacyDecision::Kept(_) => None,
            AnimacyDecision::Skipped { reason, .. } => Some(reason),
        })
        .collect();
    assert_eq!(
        reasons,
        vec![
            None,
            Some(AnimacySkip::ExcludedCategory),
            Some(AnimacySkip::NoAnimate),
            Some(AnimacySkip::NoInanimate),
            Some(AnimacySkip::EmptyRegion),
            None
        ]
    );
    let out = animacy_analysis(maps.iter().zip(&scenes)).unwrap();
    assert_eq!(out.records.len(), 2);
    assert_eq!(out.skipped.values().sum::<usize>(), 4);
    assert_eq!(out.skipped["excluded-category"], 1);

    // order of input does not change the outcome
    let rev = animacy_analysis(maps.iter().zip(&scenes).rev()).unwrap();
    assert_eq!(rev, out);
}

fn size_scene(image_id: u64) -> Scene {
    scene(
        image_id,
        200,
        200,
        vec![
            rect(1, CAR, 0.0, 0.0, 20.0, 20.0),        // 400 px², small
            rect(2, CAR, 50.0, 0.0, 100.0, 50.0),      // 2500 px², medium
            rect(3, PERSON, 0.0, 100.0, 100.0, 200.0), // 10000 px², large
        ],
    )
}

/// Constant attention per object region, background zero.
fn region_map(s: &Scene, small: f64, medium: f64, large: f64) -> Grid2D {
    let labels = &s.canvas.down;
    let (w, h) = labels.dims();
    let value = |id| s.canvas.label_of(id).unwrap();
    Grid2D::from_fn(w, h, |x, y| match labels.get(x, y) {
        l if l == value(1) => small,
        l if l == value(2) => medium,
        l if l == value(3) => large,
        _ => 0.0,
    })
    .unwrap()
}

#[test]
fn size_bins_by_hand() {
    let s = size_scene(1);
    let r = size_record(&region_map(&s, 3.0, 2.0, 1.0), &s).unwrap().unwrap();
    assert_eq!(r.small, Some(3e4));
    assert_eq!(r.medium, Some(2e4));
    assert_eq!(r.large, Some(1e4));
    assert_eq!((r.objects_used, r.objects_dropped), (3, 0));
    assert_eq!(
        s.objects.iter().map(|o| o.size_bin).collect::<Vec<_>>(),
        [SizeBin::Large, SizeBin::Medium, SizeBin::Small]
    );

    let lonely = scene(9, 200, 200, vec![rect(1, CAR, 0.0, 0.0, 20.0, 20.0)]);
    assert!(size_record(&Grid2D::zeros(200, 200), &lonely).unwrap().is_none());
}

#[test]
fn size_analysis_is_order_independent() {
    let scenes: Vec<Scene> = (1..=5).map(size_scene).collect();
    let maps: Vec<Grid2D> = scenes
        .iter()
        .enumerate()
        .map(|(k, s)| region_map(s, 3.0 + k as f64 * 0.5, 2.0, 1.0 + (k % 2) as f64))
        .collect();
    let fwd = size_analysis(maps.iter().zip(&scenes)).unwrap();
    let rev = size_analysis(maps.iter().zip(&scenes).rev()).unwrap();
    assert_eq!(fwd, rev);
    assert_eq!(fwd.test.n, 5);
    let diffs: Vec<f64> = (0..5).map(|k| (3.0 + k as f64 * 0.5 - 1.0 - (k % 2) as f64) * 1e4).collect();
    let m = diffs.iter().sum::<f64>() / 5.0;
    assert!((fwd.test.mean_diff - m).abs() < 1e-9);
    assert!((fwd.bin_means[&SizeBin::Medium] - 2e4).abs() < 1e-9);
}

#[test]
fn entropy_extremes() {
    let uniform = Grid2D::filled(224, 224, 0.5);
    assert!((entropy_bits(&uniform).unwrap() - (50176f64).log2()).abs() < 1e-6);
    let mut point = Grid2D::zeros(224, 224);
    point.set(100, 7, 3.0);
    assert_eq!(entropy_bits(&point).unwrap(), 0.0);
    assert!(entropy_bits(&Grid2D::zeros(4, 4)).is_err());
    // negatives are clipped: two equal positives give one bit
    let g = Grid2D::new(2, 2, vec![1.0, -5.0, 1.0, 0.0]).unwrap();
    assert!((entropy_bits(&g).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn clutter_bins() {
    assert_eq!(clutter_bin(0), None);
    assert_eq!(clutter_bin(1), Some(ClutterBin::Sparse));
    assert_eq!(clutter_bin(3), Some(ClutterBin::Sparse));
    assert_eq!(clutter_bin(4), Some(ClutterBin::Moderate));
    assert_eq!(clutter_bin(6), Some(ClutterBin::Moderate));
    assert_eq!(clutter_bin(7), Some(ClutterBin::Busy));
    assert_eq!(clutter_bin(10), Some(ClutterBin::Busy));
    assert_eq!(clutter_bin(11), Some(ClutterBin::Cluttered));
}
