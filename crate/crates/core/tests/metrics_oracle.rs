mod oracles;

use gaze_align_core::metrics::{auc_judd, cc, kl, nss, sim, KlDirection, NssMode};
use gaze_align_core::tensor_io::{Fixation, FixationSet};
use gaze_align_core::Grid2D;

const SIDE: usize = 8;
const INSTANCES: u64 = 200;
const TOL: f64 = 1e-9;
const EPS: f64 = 1e-10;

fn fixation_set(indices: &[usize]) -> FixationSet {
    let fixes = indices.iter().map(|&i| Fixation { x: (i % SIDE) as f64 + 0.5, y: (i / SIDE) as f64 + 0.5 }).collect();
    FixationSet::new(0, SIDE, SIDE, vec![fixes]).unwrap()
}

#[test]
fn metrics_agree_with_brute_force_on_random_instances() {
    let mut rng = oracles::rng(7);
    for k in 0..INSTANCES {
        // every other instance uses a coarse palette so ties occur
        let (s, h) = if k % 2 == 0 {
            (oracles::random_map(&mut rng, SIDE * SIDE), oracles::random_map(&mut rng, SIDE * SIDE))
        } else {
            (oracles::quantised_map(&mut rng, SIDE * SIDE, 5), oracles::quantised_map(&mut rng, SIDE * SIDE, 7))
        };
        let fix = oracles::random_fixations(&mut rng, SIDE * SIDE);
        let (sg, hg) = (Grid2D::new(SIDE, SIDE, s.clone()).unwrap(), Grid2D::new(SIDE, SIDE, h.clone()).unwrap());
        let fs = fixation_set(&fix);

        assert!((cc(&sg, &hg).unwrap() - oracles::cc(&s, &h)).abs() < TOL, "cc #{k}");
        assert!((nss(&sg, &fs, NssMode::Pooled).unwrap() - oracles::nss(&s, &fix)).abs() < TOL, "nss #{k}");
        assert!((auc_judd(&sg, &fs).unwrap() - oracles::auc_judd(&s, &fix)).abs() < TOL, "auc #{k}");
        let kl_mh = kl(&sg, &hg, EPS, KlDirection::ModelToHuman).unwrap();
        let kl_hm = kl(&sg, &hg, EPS, KlDirection::HumanToModel).unwrap();
        assert!((kl_mh - oracles::kl(&s, &h, EPS)).abs() < TOL, "kl #{k}");
        assert!((kl_hm - oracles::kl(&h, &s, EPS)).abs() < TOL, "kl reverse #{k}");
        assert!((sim(&sg, &hg, EPS).unwrap() - oracles::sim(&s, &h, EPS)).abs() < TOL, "sim #{k}");
    }
}

#[test]
fn per_observer_nss_averages_observers() {
    let s: Vec<f64> = (0..SIDE * SIDE).map(|i| (i as f64 * 0.37).sin()).collect();
    let sg = Grid2D::new(SIDE, SIDE, s.clone()).unwrap();
    let obs = [vec![3usize, 9, 40], vec![63usize]];
    let set = FixationSet::new(
        0,
        SIDE,
        SIDE,
        obs.iter()
            .map(|o| o.iter().map(|&i| Fixation { x: (i % SIDE) as f64, y: (i / SIDE) as f64 }).collect())
            .collect(),
    )
    .unwrap();
    let expected = (oracles::nss(&s, &obs[0]) + oracles::nss(&s, &obs[1])) / 2.0;
    assert!((nss(&sg, &set, NssMode::PerObserver).unwrap() - expected).abs() < 1e-12);
    let pooled = oracles::nss(&s, &[3, 9, 40, 63]);
    assert!((nss(&sg, &set, NssMode::Pooled).unwrap() - pooled).abs() < 1e-12);
}
