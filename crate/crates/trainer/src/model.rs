//! A tiny pre-norm vision transformer, generic over the scalar type so the
//! same forward pass serves plain evaluation and taped differentiation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use gaze_align_core::Real;

use crate::error::{Result, TrainError};
use crate::tape::{Tape, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TinyViTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub mlp_dim: usize,
    pub seed: u64,
    /// Train the Q/K/V/output biases along with their weights.
    pub train_attention_biases: bool,
}

impl Default for TinyViTConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            patch_size: 8,
            channels: 3,
            embed_dim: 32,
            layers: 3,
            heads: 4,
            mlp_dim: 64,
            seed: 0,
            train_attention_biases: true,
        }
    }
}

impl TinyViTConfig {
    pub fn validate(&self) -> Result<()> {
        let positive =
            [self.image_size, self.patch_size, self.channels, self.embed_dim, self.layers, self.heads, self.mlp_dim];
        if positive.contains(&0) {
            return Err(TrainError::Config("all dimensions must be positive".into()));
        }
        if !self.image_size.is_multiple_of(self.patch_size) {
            return Err(TrainError::Config(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            )));
        }
        if !self.embed_dim.is_multiple_of(self.heads) {
            return Err(TrainError::Config(format!(
                "embed dim {} is not divisible by {} heads",
                self.embed_dim, self.heads
            )));
        }
        Ok(())
    }

    pub fn grid_side(&self) -> usize {
        self.image_size / self.patch_size
    }

    /// Patch tokens plus the class token.
    pub fn tokens(&self) -> usize {
        self.grid_side() * self.grid_side() + 1
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    /// Values per image, channel-major `[c][y][x]`.
    pub fn image_len(&self) -> usize {
        self.channels * self.image_size * self.image_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    PatchWeight,
    PatchBias,
    ClassToken,
    PositionEmbedding,
    NormGain,
    NormBias,
    AttentionWeight,
    AttentionBias,
    MlpWeight,
    MlpBias,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub kind: ParamKind,
    /// Linear weights are stored `(out, in)`, row-major.
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

const GLOBAL_TENSORS: usize = 4;
const BLOCK_TENSORS: usize = 16;

// Tensor order: patch weight, patch bias, class token, position embedding,
// then per block the slots below, then the final norm gain and bias.
const PATCH_W: usize = 0;
const PATCH_B: usize = 1;
const CLS: usize = 2;
const POS: usize = 3;
const NORM1_G: usize = 0;
const NORM1_B: usize = 1;
const Q_W: usize = 2;
const Q_B: usize = 3;
const K_W: usize = 4;
const K_B: usize = 5;
const V_W: usize = 6;
const V_B: usize = 7;
const O_W: usize = 8;
const O_B: usize = 9;
const NORM2_G: usize = 10;
const NORM2_B: usize = 11;
const FC1_W: usize = 12;
const FC1_B: usize = 13;
const FC2_W: usize = 14;
const FC2_B: usize = 15;

fn block_slot(layer: usize, slot: usize) -> usize {
    GLOBAL_TENSORS + layer * BLOCK_TENSORS + slot
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub config: TinyViTConfig,
    pub tensors: Vec<ParamTensor>,
    trainable: Vec<bool>,
}

fn xavier(rng: &mut ChaCha8Rng, out: usize, inp: usize) -> Vec<f64> {
    let a = (6.0 / (out + inp) as f64).sqrt();
    (0..out * inp).map(|_| rng.gen_range(-a..a)).collect()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, a: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-a..a)).collect()
}

impl ParamSet {
    /// Seeded initialisation: Xavier-uniform linear weights, zero biases,
    /// unit norm gains.
    pub fn init(config: TinyViTConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (d, m, t) = (config.embed_dim, config.mlp_dim, config.tokens());
        let mut tensors = Vec::new();
        let mut push = |name: String, kind, shape: Vec<usize>, data: Vec<f64>| {
            tensors.push(ParamTensor { name, kind, shape, data });
        };
        let pd = config.patch_dim();
        push("patch.weight".into(), ParamKind::PatchWeight, vec![d, pd], xavier(&mut rng, d, pd));
        push("patch.bias".into(), ParamKind::PatchBias, vec![d], vec![0.0; d]);
        push("cls_token".into(), ParamKind::ClassToken, vec![d], uniform(&mut rng, d, 1.0));
        push("pos_embed".into(), ParamKind::PositionEmbedding, vec![t, d], uniform(&mut rng, t * d, 0.5));
        for l in 0..config.layers {
            let p = |s: &str| format!("blocks.{l}.{s}");
            push(p("norm1.gain"), ParamKind::NormGain, vec![d], vec![1.0; d]);
            push(p("norm1.bias"), ParamKind::NormBias, vec![d], vec![0.0; d]);
            for proj in ["q", "k", "v", "o"] {
                push(p(&format!("attn.{proj}.weight")), ParamKind::AttentionWeight, vec![d, d], xavier(&mut rng, d, d));
                push(p(&format!("attn.{proj}.bias")), ParamKind::AttentionBias, vec![d], vec![0.0; d]);
            }
            push(p("norm2.gain"), ParamKind::NormGain, vec![d], vec![1.0; d]);
            push(p("norm2.bias"), ParamKind::NormBias, vec![d], vec![0.0; d]);
            push(p("mlp.fc1.weight"), ParamKind::MlpWeight, vec![m, d], xavier(&mut rng, m, d));
            push(p("mlp.fc1.bias"), ParamKind::MlpBias, vec![m], vec![0.0; m]);
            push(p("mlp.fc2.weight"), ParamKind::MlpWeight, vec![d, m], xavier(&mut rng, d, m));
            push(p("mlp.fc2.bias"), ParamKind::MlpBias, vec![d], vec![0.0; d]);
        }
        push("norm.gain".into(), ParamKind::NormGain, vec![d], vec![1.0; d]);
        push("norm.bias".into(), ParamKind::NormBias, vec![d], vec![0.0; d]);
        Self::from_tensors(config, tensors)
    }

    /// Rebuilds a parameter set from tensors in canonical order, e.g. a
    /// loaded checkpoint. Shapes are checked against a fresh layout.
    pub fn from_tensors(config: TinyViTConfig, tensors: Vec<ParamTensor>) -> Result<Self> {
        config.validate()?;
        let expected = GLOBAL_TENSORS + config.layers * BLOCK_TENSORS + 2;
        if tensors.len() != expected {
            return Err(TrainError::Shape(format!("expected {expected} tensors, got {}", tensors.len())));
        }
        for t in &tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(TrainError::Shape(format!("{}: shape {:?} vs {} values", t.name, t.shape, t.data.len())));
            }
        }
        let trainable = tensors
            .iter()
            .map(|t| match t.kind {
                ParamKind::AttentionWeight => true,
                ParamKind::AttentionBias => config.train_attention_biases,
                _ => false,
            })
            .collect();
        let set = Self { config, tensors, trainable };
        set.check_layout()?;
        Ok(set)
    }

    fn check_layout(&self) -> Result<()> {
        let c = &self.config;
        let (d, m) = (c.embed_dim, c.mlp_dim);
        let mut want = vec![vec![d, c.patch_dim()], vec![d], vec![d], vec![c.tokens(), d]];
        for _ in 0..c.layers {
            want.extend([vec![d], vec![d]]);
            for _ in 0..4 {
                want.extend([vec![d, d], vec![d]]);
            }
            want.extend([vec![d], vec![d], vec![m, d], vec![m], vec![d, m], vec![d]]);
        }
        want.extend([vec![d], vec![d]]);
        for (t, w) in self.tensors.iter().zip(&want) {
            if &t.shape != w {
                return Err(TrainError::Shape(format!("{}: expected {w:?}, found {:?}", t.name, t.shape)));
            }
        }
        Ok(())
    }

    pub fn is_trainable(&self, index: usize) -> bool {
        self.trainable[index]
    }

    pub fn trainable_indices(&self) -> Vec<usize> {
        (0..self.tensors.len()).filter(|&i| self.trainable[i]).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable_indices().iter().map(|&i| self.tensors[i].data.len()).sum()
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.tensors.iter().map(|t| t.data.as_slice()).collect()
    }

    /// Trainable tensors become tape variables; everything else is constant.
    pub fn lift<'t>(&self, tape: &'t Tape) -> Vec<Vec<Var<'t>>> {
        self.tensors
            .iter()
            .zip(&self.trainable)
            .map(|(t, &train)| {
                if train {
                    t.data.iter().map(|&v| tape.var(v)).collect()
                } else {
                    t.data.iter().map(|&v| Var::constant(v)).collect()
                }
            })
            .collect()
    }
}

/// Per-layer softmax attention (`layers × heads × tokens × tokens`,
/// row-major) and the final-norm class-token hidden state.
#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub attention: Vec<T>,
    pub cls: Vec<T>,
}

fn linear<T: Real>(w: &[T], b: &[T], x: &[T], out: usize) -> Vec<T> {
    let inp = x.len();
    (0..out).map(|o| T::dot(&w[o * inp..(o + 1) * inp], x) + b[o]).collect()
}

fn layer_norm<T: Real>(x: &[T], gain: &[T], bias: &[T]) -> Vec<T> {
    let n = x.len() as f64;
    let mean = T::sum(x) / n;
    let centred: Vec<T> = x.iter().map(|&v| v - mean).collect();
    let var = T::dot(&centred, &centred) / n;
    let inv = (var + LAYER_NORM_EPS).sqrt().recip();
    centred.iter().zip(gain.iter().zip(bias)).map(|(&c, (&g, &b))| c * inv * g + b).collect()
}

/// Tanh approximation of GELU.
pub fn gelu<T: Real>(x: T) -> T {
    const C: f64 = 0.797_884_560_802_865_4; // √(2/π)
    let inner = (x + x * x * x * 0.044_715) * C;
    x * (inner.tanh() + 1.0) * 0.5
}

fn softmax<T: Real>(scores: &[T]) -> Vec<T> {
    // The shift is a constant: softmax is invariant to it.
    let max = scores.iter().map(|s| s.value()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<T> = scores.iter().map(|&s| (s - max).exp()).collect();
    let inv = T::sum(&exps).recip();
    exps.into_iter().map(|e| e * inv).collect()
}

/// Patch vectors of a channel-major image, in row-major patch order.
pub fn patchify(config: &TinyViTConfig, image: &[f64]) -> Vec<Vec<f64>> {
    let (s, p, side) = (config.image_size, config.patch_size, config.grid_side());
    let mut patches = Vec::with_capacity(side * side);
    for py in 0..side {
        for px in 0..side {
            let mut v = Vec::with_capacity(config.patch_dim());
            for c in 0..config.channels {
                for dy in 0..p {
                    let row = c * s * s + (py * p + dy) * s + px * p;
                    v.extend_from_slice(&image[row..row + p]);
                }
            }
            patches.push(v);
        }
    }
    patches
}

pub fn forward<T: Real, P: AsRef<[T]>>(
    config: &TinyViTConfig,
    params: &[P],
    image: &[f64],
) -> Result<ForwardOutput<T>> {
    if image.len() != config.image_len() {
        return Err(TrainError::Shape(format!(
            "image has {} values, config expects {}",
            image.len(),
            config.image_len()
        )));
    }
    let p = |i: usize| params[i].as_ref();
    let (d, t, h, hd) = (config.embed_dim, config.tokens(), config.heads, config.head_dim());

    let cls = p(CLS);
    let pos = p(POS);
    let mut x: Vec<Vec<T>> = Vec::with_capacity(t);
    x.push((0..d).map(|i| cls[i] + pos[i]).collect());
    for (k, patch) in patchify(config, image).iter().enumerate() {
        let patch: Vec<T> = patch.iter().map(|&v| T::constant(v)).collect();
        let e = linear(p(PATCH_W), p(PATCH_B), &patch, d);
        x.push(e.into_iter().zip(&pos[(k + 1) * d..(k + 2) * d]).map(|(a, &b)| a + b).collect());
    }

    let scale = 1.0 / (hd as f64).sqrt();
    let mut attention = Vec::with_capacity(config.layers * h * t * t);
    for l in 0..config.layers {
        let b = |slot| p(block_slot(l, slot));
        let normed: Vec<Vec<T>> = x.iter().map(|tok| layer_norm(tok, b(NORM1_G), b(NORM1_B))).collect();
        let q: Vec<Vec<T>> = normed.iter().map(|v| linear(b(Q_W), b(Q_B), v, d)).collect();
        let k: Vec<Vec<T>> = normed.iter().map(|v| linear(b(K_W), b(K_B), v, d)).collect();
        let v: Vec<Vec<T>> = normed.iter().map(|v| linear(b(V_W), b(V_B), v, d)).collect();

        let mut heads_out: Vec<Vec<T>> = vec![Vec::with_capacity(d); t];
        for head in 0..h {
            let span = head * hd..(head + 1) * hd;
            // value columns of this head, one vector per output dim
            let v_cols: Vec<Vec<T>> = span.clone().map(|c| v.iter().map(|row| row[c]).collect()).collect();
            for i in 0..t {
                let scores: Vec<T> = (0..t).map(|j| T::dot(&q[i][span.clone()], &k[j][span.clone()]) * scale).collect();
                let a = softmax(&scores);
                for col in &v_cols {
                    heads_out[i].push(T::dot(&a, col));
                }
                attention.extend(a);
            }
        }
        // attention was pushed head-major within the layer already
        for (tok, ho) in x.iter_mut().zip(&heads_out) {
            let o = linear(b(O_W), b(O_B), ho, d);
            for (xi, oi) in tok.iter_mut().zip(o) {
                *xi = *xi + oi;
            }
        }

        for tok in x.iter_mut() {
            let n = layer_norm(tok, b(NORM2_G), b(NORM2_B));
            let hidden: Vec<T> = linear(b(FC1_W), b(FC1_B), &n, config.mlp_dim).into_iter().map(gelu).collect();
            let o = linear(b(FC2_W), b(FC2_B), &hidden, d);
            for (xi, oi) in tok.iter_mut().zip(o) {
                *xi = *xi + oi;
            }
        }
    }
    let last = GLOBAL_TENSORS + config.layers * BLOCK_TENSORS;
    let cls = layer_norm(&x[0], p(last), p(last + 1));
    Ok(ForwardOutput { attention, cls })
}

/// Plain `f64` forward pass.
pub fn forward_f64(params: &ParamSet, image: &[f64]) -> Result<ForwardOutput<f64>> {
    forward(&params.config, &params.slices(), image)
}
