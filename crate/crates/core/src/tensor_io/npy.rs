//! Reader and writer for the NPY v1.0 container.
//!
//! Layout: the 6-byte magic `\x93NUMPY`, version bytes `1 0`, a little-endian
//! `u16` header length, then an ASCII Python dict literal
//! `{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }` padded with
//! spaces and terminated by `\n` so that the payload starts on a 64-byte
//! boundary. The payload is the raw little-endian C-order element data.
//!
//! Only `<f4` and `<f8` elements in C order are accepted, with rank ≤ 4.
//! Headers are written exactly as numpy formats them, so a file produced by
//! numpy (or by [`encode`]) re-encodes to identical bytes.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor_io::grid::{AttentionStack, Grid2D};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const PREAMBLE_LEN: usize = 10;
const ALIGNMENT: usize = 64;
const GROWTH_AXIS_MAX_DIGITS: usize = 21;
pub const MAX_RANK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementType {
    F32,
    F64,
}

impl ElementType {
    fn descr(self) -> &'static str {
        match self {
            ElementType::F32 => "<f4",
            ElementType::F64 => "<f8",
        }
    }

    fn size(self) -> usize {
        match self {
            ElementType::F32 => 4,
            ElementType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn element_type(&self) -> ElementType {
        match self {
            TensorData::F32(_) => ElementType::F32,
            TensorData::F64(_) => ElementType::F64,
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NpyTensor {
    shape: Vec<usize>,
    data: TensorData,
}

impl NpyTensor {
    pub fn new(shape: Vec<usize>, data: TensorData) -> Result<Self> {
        if shape.len() > MAX_RANK {
            return Err(Error::Shape(format!("rank {} exceeds {MAX_RANK}", shape.len())));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("shape {shape:?} holds {n} elements, data has {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn from_grid(grid: &Grid2D, element: ElementType) -> Self {
        let data = match element {
            ElementType::F64 => TensorData::F64(grid.values().to_vec()),
            ElementType::F32 => TensorData::F32(grid.values().iter().map(|&v| v as f32).collect()),
        };
        Self { shape: vec![grid.height(), grid.width()], data }
    }

    pub fn from_attention_stack(stack: &AttentionStack, element: ElementType) -> Self {
        let data = match element {
            ElementType::F64 => TensorData::F64(stack.values().to_vec()),
            ElementType::F32 => TensorData::F32(stack.values().iter().map(|&v| v as f32).collect()),
        };
        Self { shape: stack.shape().to_vec(), data }
    }

    /// Interprets a rank-2 `(height, width)` tensor as a grid.
    pub fn to_grid(&self) -> Result<Grid2D> {
        match self.shape[..] {
            [h, w] => Grid2D::new(w, h, self.data.to_f64()),
            _ => Err(Error::Shape(format!("expected rank-2 tensor, got shape {:?}", self.shape))),
        }
    }

    /// Interprets a rank-4 `(layers, heads, tokens, tokens)` tensor as an
    /// attention stack, validating row-stochasticity.
    pub fn to_attention_stack(&self) -> Result<AttentionStack> {
        match self.shape[..] {
            [l, h, t, t2] if t == t2 => AttentionStack::new(l, h, t, self.data.to_f64()),
            _ => Err(Error::Shape(format!("expected (layers, heads, tokens, tokens), got shape {:?}", self.shape))),
        }
    }
}

fn header_text(descr: &str, shape: &[usize]) -> String {
    let shape_txt = match shape {
        [] => "()".to_string(),
        [n] => format!("({n},)"),
        dims => format!("({})", dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")),
    };
    let mut dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': {shape_txt}, }}");
    // numpy reserves room for the leading axis to grow in place.
    if let Some(first) = shape.first() {
        let digits = first.to_string().len();
        dict.push_str(&" ".repeat(GROWTH_AXIS_MAX_DIGITS.saturating_sub(digits)));
    }
    let pad = ALIGNMENT - (PREAMBLE_LEN + dict.len() + 1) % ALIGNMENT;
    format!("{dict}{}\n", " ".repeat(pad))
}

pub fn encode(tensor: &NpyTensor) -> Vec<u8> {
    let header = header_text(tensor.data.element_type().descr(), &tensor.shape);
    let elem = tensor.data.element_type().size();
    let mut out = Vec::with_capacity(PREAMBLE_LEN + header.len() + tensor.data.len() * elem);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    match &tensor.data {
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<NpyTensor> {
    if bytes.len() < PREAMBLE_LEN || &bytes[..6] != MAGIC {
        return Err(Error::MalformedHeader("missing \\x93NUMPY magic".into()));
    }
    if bytes[6] != 1 || bytes[7] != 0 {
        return Err(Error::MalformedHeader(format!("unsupported format version {}.{}", bytes[6], bytes[7])));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let payload_start = PREAMBLE_LEN + header_len;
    if bytes.len() < payload_start {
        return Err(Error::MalformedHeader("truncated header".into()));
    }
    let header = std::str::from_utf8(&bytes[PREAMBLE_LEN..payload_start])
        .map_err(|_| Error::MalformedHeader("header is not ASCII".into()))?;
    let parsed = parse_header(header)?;
    if parsed.fortran_order {
        return Err(Error::MalformedHeader("fortran_order=True is not supported".into()));
    }
    let element = match parsed.descr.as_str() {
        "<f4" => ElementType::F32,
        "<f8" => ElementType::F64,
        other => return Err(Error::UnsupportedDtype(other.to_string())),
    };
    if parsed.shape.len() > MAX_RANK {
        return Err(Error::Shape(format!("rank {} exceeds {MAX_RANK}", parsed.shape.len())));
    }
    let count = parsed
        .shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::MalformedHeader("shape overflows".into()))?;
    let payload = &bytes[payload_start..];
    let expected = count * element.size();
    if payload.len() != expected {
        return Err(Error::LengthMismatch { expected, found: payload.len() });
    }
    let data = match element {
        ElementType::F32 => {
            TensorData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
        }
        ElementType::F64 => {
            TensorData::F64(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
        }
    };
    Ok(NpyTensor { shape: parsed.shape, data })
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<NpyTensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

pub fn write_tensor_file(path: impl AsRef<Path>, tensor: &NpyTensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(tensor)).map_err(|e| Error::io(path, e))
}

struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// Parses the restricted dict literal numpy writes. Keys may appear in any
/// order; unknown keys are rejected.
fn parse_header(text: &str) -> Result<Header> {
    let bad = |msg: &str| Error::MalformedHeader(format!("{msg} in {:?}", text.trim_end()));
    let body = text
        .trim_end_matches(['\n', ' ', '\0'])
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| bad("header is not a dict literal"))?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    let mut rest = body.trim_start();
    while !rest.is_empty() {
        let (key, after) = parse_quoted(rest).ok_or_else(|| bad("expected quoted key"))?;
        let after = after.trim_start().strip_prefix(':').ok_or_else(|| bad("expected ':'"))?.trim_start();
        let after = match key {
            "descr" => {
                let (v, a) = parse_quoted(after).ok_or_else(|| bad("descr must be a string"))?;
                descr = Some(v.to_string());
                a
            }
            "fortran_order" => {
                if let Some(a) = after.strip_prefix("False") {
                    fortran = Some(false);
                    a
                } else if let Some(a) = after.strip_prefix("True") {
                    fortran = Some(true);
                    a
                } else {
                    return Err(bad("fortran_order must be True or False"));
                }
            }
            "shape" => {
                let inner = after.strip_prefix('(').ok_or_else(|| bad("shape must be a tuple"))?;
                let close = inner.find(')').ok_or_else(|| bad("unterminated shape tuple"))?;
                let dims = inner[..close]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.trim_end_matches('L').parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("shape entries must be non-negative integers"))?;
                shape = Some(dims);
                &inner[close + 1..]
            }
            other => return Err(bad(&format!("unexpected key '{other}'"))),
        };
        let after = after.trim_start();
        rest = match after.strip_prefix(',') {
            Some(a) => a.trim_start(),
            None if after.is_empty() => after,
            None => return Err(bad("expected ','")),
        };
    }
    Ok(Header {
        descr: descr.ok_or_else(|| bad("missing 'descr'"))?,
        fortran_order: fortran.ok_or_else(|| bad("missing 'fortran_order'"))?,
        shape: shape.ok_or_else(|| bad("missing 'shape'"))?,
    })
}

fn parse_quoted(s: &str) -> Option<(&str, &str)> {
    let quote = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let inner = &s[1..];
    let end = inner.find(quote)?;
    Some((&inner[..end], &inner[end + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_64_byte_aligned() {
        for shape in [vec![], vec![3], vec![2, 2], vec![12, 12, 197, 197]] {
            let n = shape.iter().product();
            let t = NpyTensor::new(shape, TensorData::F64(vec![0.0; n])).unwrap();
            let bytes = encode(&t);
            let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
            assert_eq!((PREAMBLE_LEN + header_len) % ALIGNMENT, 0);
            assert_eq!(bytes[PREAMBLE_LEN + header_len - 1], b'\n');
        }
    }

    #[test]
    fn numpy_header_text_matches() {
        // Bytes numpy 1.x/2.x writes for np.save(f, np.zeros((2, 2)))
        let h = header_text("<f8", &[2, 2]);
        assert!(h.starts_with("{'descr': '<f8', 'fortran_order': False, 'shape': (2, 2), }"));
        assert_eq!(h.len(), 118);
        assert_eq!(header_text("<f4", &[3]).trim_end(), "{'descr': '<f4', 'fortran_order': False, 'shape': (3,), }");
    }

    #[test]
    fn identity_round_trip() {
        let g = Grid2D::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let t = NpyTensor::from_grid(&g, ElementType::F64);
        let back = decode(&encode(&t)).unwrap();
        assert_eq!(back.to_grid().unwrap(), g);
    }

    #[test]
    fn length_mismatch_detected() {
        let t = NpyTensor::new(vec![3], TensorData::F64(vec![1.0, 2.0, 3.0])).unwrap();
        let mut bytes = encode(&t);
        bytes.truncate(bytes.len() - 8);
        assert!(matches!(decode(&bytes), Err(Error::LengthMismatch { expected: 24, found: 16 })));
    }

    #[test]
    fn rejects_unsupported_dtype() {
        let t = NpyTensor::new(vec![1], TensorData::F64(vec![1.0])).unwrap();
        let mut bytes = encode(&t);
        let at = bytes.windows(3).position(|w| w == b"<f8").unwrap();
        bytes[at + 1] = b'i';
        assert!(matches!(decode(&bytes), Err(Error::UnsupportedDtype(d)) if d == "<i8"));
    }

    #[test]
    fn rejects_bad_magic_and_rank() {
        assert!(matches!(decode(b"NOTNUMPY.."), Err(Error::MalformedHeader(_))));
        assert!(matches!(NpyTensor::new(vec![1; 5], TensorData::F64(vec![0.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn accepts_reordered_keys() {
        let h = parse_header("{'shape': (4, 5), 'fortran_order': False, 'descr': '<f4'}    \n").unwrap();
        assert_eq!(h.shape, vec![4, 5]);
        assert_eq!(h.descr, "<f4");
    }
}
