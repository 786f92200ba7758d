// Oracles index explicitly to mirror the textbook formulation.
#![allow(clippy::needless_range_loop)]

mod oracles;

use rand::Rng;

use gaze_align_core::rollout::{rollout, rollout_matrix, NormaliseOrder, RolloutOptions};
use gaze_align_core::AttentionStack;

fn tenths(rows: [[u32; 5]; 5]) -> Vec<f64> {
    rows.iter().flatten().map(|&v| v as f64 / 10.0).collect()
}

#[test]
fn two_layer_five_token_example() {
    // worked by hand in exact fractions
    let mut v = Vec::new();
    v.extend(tenths([[2, 2, 2, 2, 2], [4, 1, 1, 2, 2], [0, 5, 5, 0, 0], [1, 1, 1, 1, 6], [10, 0, 0, 0, 0]]));
    v.extend(tenths([[6, 1, 1, 1, 1], [2, 2, 2, 2, 2], [1, 1, 6, 1, 1], [0, 0, 0, 10, 0], [2, 2, 2, 2, 2]]));
    v.extend(tenths([[1, 2, 3, 4, 0], [0, 0, 5, 5, 0], [2, 2, 2, 2, 2], [3, 3, 3, 1, 0], [1, 1, 1, 1, 6]]));
    v.extend(tenths([[5, 0, 0, 0, 5], [2, 3, 1, 2, 2], [0, 10, 0, 0, 0], [2, 2, 2, 2, 2], [4, 4, 1, 1, 0]]));
    let stack = AttentionStack::new(2, 2, 5, v).unwrap();
    let expected_row = [807.0 / 1600.0, 39.0 / 400.0, 191.0 / 1600.0, 223.0 / 1600.0, 223.0 / 1600.0];
    let r = rollout_matrix(stack.values(), 2, 2, 5);
    for (a, b) in r[..5].iter().zip(expected_row) {
        assert!((a - b).abs() < 1e-12);
    }
    let m = rollout(&stack, RolloutOptions { target: (2, 2), order: NormaliseOrder::AfterUpsample }).unwrap();
    for (a, b) in m.patch_grid.values().iter().zip(&expected_row[1..]) {
        assert!((a - b).abs() < 1e-12);
    }
    // min 0.0975 → 0, max 0.139375 → 1
    let span = 223.0 / 1600.0 - 39.0 / 400.0;
    let expected_norm = [0.0, (191.0 / 1600.0 - 39.0 / 400.0) / span, 1.0, 1.0];
    for (a, b) in m.upsampled.values().iter().zip(expected_norm) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn random_stack(rng: &mut rand_chacha::ChaCha8Rng, layers: usize, heads: usize, tokens: usize) -> AttentionStack {
    let mut v = Vec::new();
    for _ in 0..layers * heads * tokens {
        let row: Vec<f64> = (0..tokens).map(|_| rng.gen::<f64>().powi(3)).collect();
        let s: f64 = row.iter().sum();
        v.extend(row.iter().map(|x| x / s));
    }
    AttentionStack::new(layers, heads, tokens, v).unwrap()
}

#[test]
fn rollout_matrix_is_row_stochastic() {
    let mut rng = oracles::rng(100);
    for _ in 0..100 {
        let layers = rng.gen_range(1..6);
        let heads = rng.gen_range(1..5);
        let tokens = [5, 10, 17][rng.gen_range(0..3)];
        let s = random_stack(&mut rng, layers, heads, tokens);
        let r = rollout_matrix(s.values(), layers, heads, tokens);
        for row in r.chunks(tokens) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
    }
}

#[test]
fn head_order_does_not_matter() {
    let mut rng = oracles::rng(5);
    for _ in 0..20 {
        let (layers, heads, tokens) = (3, 4, 10);
        let s = random_stack(&mut rng, layers, heads, tokens);
        // rotate head order within each layer, a different shift per layer
        let block = tokens * tokens;
        let mut permuted = Vec::new();
        for l in 0..layers {
            for k in 0..heads {
                let h = (k + l + 1) % heads;
                let start = (l * heads + h) * block;
                permuted.extend_from_slice(&s.values()[start..start + block]);
            }
        }
        let p = AttentionStack::new(layers, heads, tokens, permuted).unwrap();
        let opts = RolloutOptions { target: (12, 12), ..Default::default() };
        let (a, b) = (rollout(&s, opts).unwrap(), rollout(&p, opts).unwrap());
        assert_eq!(a, b);
    }
}

#[test]
fn rollout_matches_explicit_matrix_products() {
    let mut rng = oracles::rng(9);
    for _ in 0..20 {
        let (layers, heads, tokens) = (rng.gen_range(1..5), rng.gen_range(1..4), 10);
        let s = random_stack(&mut rng, layers, heads, tokens);
        let lib = rollout_matrix(s.values(), layers, heads, tokens);
        let mut r: Option<Vec<Vec<f64>>> = None;
        for l in 0..layers {
            let mut a = vec![vec![0.0; tokens]; tokens];
            for i in 0..tokens {
                for j in 0..tokens {
                    for h in 0..heads {
                        a[i][j] += s.matrix(l, h)[i * tokens + j] / heads as f64;
                    }
                }
                a[i][i] += 1.0;
                let z: f64 = a[i].iter().sum();
                a[i].iter_mut().for_each(|v| *v /= z);
            }
            r = Some(match r {
                None => a,
                Some(prev) => (0..tokens)
                    .map(|i| (0..tokens).map(|j| (0..tokens).map(|k| a[i][k] * prev[k][j]).sum()).collect())
                    .collect(),
            });
        }
        for (x, y) in lib.iter().zip(r.unwrap().iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
