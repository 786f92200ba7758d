//! Straightforward reference implementation of the model and loss, written
//! independently of the library (explicit loops, tensors looked up by name).

#![allow(dead_code, clippy::needless_range_loop, clippy::type_complexity)]

use gaze_align_trainer::{ParamSet, TinyViTConfig};

pub struct Oracle<'a> {
    p: &'a ParamSet,
}

impl<'a> Oracle<'a> {
    pub fn new(p: &'a ParamSet) -> Self {
        Self { p }
    }

    fn t(&self, name: &str) -> &[f64] {
        &self.p.tensors.iter().find(|t| t.name == name).unwrap_or_else(|| panic!("no tensor {name}")).data
    }

    fn cfg(&self) -> &TinyViTConfig {
        &self.p.config
    }
}

fn matvec(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let out = b.len();
    let inp = x.len();
    let mut y = vec![0.0; out];
    for o in 0..out {
        let mut s = 0.0;
        for i in 0..inp {
            s += w[o * inp + i] * x[i];
        }
        y[o] = s + b[o];
    }
    y
}

fn norm(x: &[f64], g: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    let sd = (var + 1e-5).sqrt();
    x.iter().zip(g).zip(b).map(|((v, g), b)| (v - mu) / sd * g + b).collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Returns (attention[layer][head][i][j], class hidden state).
pub fn oracle_forward(p: &ParamSet, image: &[f64]) -> (Vec<Vec<Vec<Vec<f64>>>>, Vec<f64>) {
    let o = Oracle::new(p);
    let c = *o.cfg();
    let d = c.embed_dim;
    let side = c.image_size / c.patch_size;
    let t = side * side + 1;
    let pos = o.t("pos_embed");
    let mut x = vec![vec![0.0; d]; t];
    for k in 0..d {
        x[0][k] = o.t("cls_token")[k] + pos[k];
    }
    for py in 0..side {
        for px in 0..side {
            let mut patch = Vec::new();
            for ch in 0..c.channels {
                for dy in 0..c.patch_size {
                    for dx in 0..c.patch_size {
                        let (yy, xx) = (py * c.patch_size + dy, px * c.patch_size + dx);
                        patch.push(image[ch * c.image_size * c.image_size + yy * c.image_size + xx]);
                    }
                }
            }
            let tok = 1 + py * side + px;
            let e = matvec(o.t("patch.weight"), o.t("patch.bias"), &patch);
            for k in 0..d {
                x[tok][k] = e[k] + pos[tok * d + k];
            }
        }
    }
    let hd = d / c.heads;
    let mut attn_all = Vec::new();
    for l in 0..c.layers {
        let n = |s: &str| format!("blocks.{l}.{s}");
        let h: Vec<Vec<f64>> = x.iter().map(|v| norm(v, o.t(&n("norm1.gain")), o.t(&n("norm1.bias")))).collect();
        let proj = |which: &str| -> Vec<Vec<f64>> {
            h.iter()
                .map(|v| matvec(o.t(&n(&format!("attn.{which}.weight"))), o.t(&n(&format!("attn.{which}.bias"))), v))
                .collect()
        };
        let (q, k, v) = (proj("q"), proj("k"), proj("v"));
        let mut concat = vec![vec![0.0; d]; t];
        let mut layer_attn = Vec::new();
        for head in 0..c.heads {
            let mut a = vec![vec![0.0; t]; t];
            for i in 0..t {
                let mut s = vec![0.0; t];
                for j in 0..t {
                    for e in head * hd..(head + 1) * hd {
                        s[j] += q[i][e] * k[j][e];
                    }
                    s[j] /= (hd as f64).sqrt();
                }
                let m = s.iter().cloned().fold(f64::MIN, f64::max);
                let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
                for j in 0..t {
                    a[i][j] = (s[j] - m).exp() / z;
                }
                for e in head * hd..(head + 1) * hd {
                    concat[i][e] = (0..t).map(|j| a[i][j] * v[j][e]).sum();
                }
            }
            layer_attn.push(a);
        }
        attn_all.push(layer_attn);
        for i in 0..t {
            let out = matvec(o.t(&n("attn.o.weight")), o.t(&n("attn.o.bias")), &concat[i]);
            for e in 0..d {
                x[i][e] += out[e];
            }
            let h2 = norm(&x[i], o.t(&n("norm2.gain")), o.t(&n("norm2.bias")));
            let hidden: Vec<f64> =
                matvec(o.t(&n("mlp.fc1.weight")), o.t(&n("mlp.fc1.bias")), &h2).into_iter().map(gelu).collect();
            let out = matvec(o.t(&n("mlp.fc2.weight")), o.t(&n("mlp.fc2.bias")), &hidden);
            for e in 0..d {
                x[i][e] += out[e];
            }
        }
    }
    let cls = norm(&x[0], o.t("norm.gain"), o.t("norm.bias"));
    (attn_all, cls)
}

/// Rollout by explicit matrix products, then corner-aligned bilinear
/// upsampling and min-max normalisation.
pub fn oracle_rollout(attn: &[Vec<Vec<Vec<f64>>>], side: usize, out: usize) -> Vec<f64> {
    let t = attn[0][0].len();
    let mut r: Option<Vec<Vec<f64>>> = None;
    for layer in attn {
        let mut a = vec![vec![0.0; t]; t];
        for i in 0..t {
            for j in 0..t {
                a[i][j] = layer.iter().map(|h| h[i][j]).sum::<f64>() / layer.len() as f64;
                if i == j {
                    a[i][j] += 1.0;
                }
            }
            let s: f64 = a[i].iter().sum();
            for j in 0..t {
                a[i][j] /= s;
            }
        }
        r = Some(match r {
            None => a,
            Some(prev) => {
                let mut m = vec![vec![0.0; t]; t];
                for i in 0..t {
                    for j in 0..t {
                        for k in 0..t {
                            m[i][j] += a[i][k] * prev[k][j];
                        }
                    }
                }
                m
            }
        });
    }
    let r = r.unwrap();
    let patch = &r[0][1..];
    let mut up = vec![0.0; out * out];
    let coord = |o: usize| -> f64 { o as f64 * (side - 1) as f64 / (out - 1) as f64 };
    for y in 0..out {
        for x in 0..out {
            let (sx, sy) = (coord(x), coord(y));
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(side - 1), (y0 + 1).min(side - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let g = |xx: usize, yy: usize| patch[yy * side + xx];
            up[y * out + x] = g(x0, y0) * (1.0 - fx) * (1.0 - fy)
                + g(x1, y0) * fx * (1.0 - fy)
                + g(x0, y1) * (1.0 - fx) * fy
                + g(x1, y1) * fx * fy;
        }
    }
    let lo = up.iter().cloned().fold(f64::MAX, f64::min);
    let hi = up.iter().cloned().fold(f64::MIN, f64::max);
    up.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

fn prob(xs: &[f64], eps: f64) -> Vec<f64> {
    let s: f64 = xs.iter().sum::<f64>() + eps * xs.len() as f64;
    xs.iter().map(|v| (v + eps) / s).collect()
}

/// (total, distill, kl) with the model-to-target KL direction.
pub fn oracle_loss(
    p: &ParamSet,
    teacher: &ParamSet,
    image: &[f64],
    target_minmax: &[f64],
    lambda: f64,
) -> (f64, f64, f64) {
    let (attn, cls) = oracle_forward(p, image);
    let (_, tcls) = oracle_forward(teacher, image);
    let distill = cls.iter().zip(&tcls).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / cls.len() as f64;
    let c = p.config;
    let map = oracle_rollout(&attn, c.image_size / c.patch_size, c.image_size);
    let pm = prob(&map, 1e-10);
    let pt = prob(target_minmax, 1e-10);
    let kl: f64 = pm.iter().zip(&pt).map(|(a, b)| a * (a / b).ln()).sum();
    (distill + lambda * kl, distill, kl)
}

/// Deterministically nudges every trainable coordinate so the student
/// differs from its teacher.
pub fn perturbed(p: &ParamSet, scale: f64, seed: u64) -> ParamSet {
    let mut q = p.clone();
    let mut s = seed;
    for i in q.trainable_indices() {
        for v in q.tensors[i].data.iter_mut() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *v += ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * scale;
        }
    }
    q
}
