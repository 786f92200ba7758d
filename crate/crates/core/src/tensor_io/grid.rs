use crate::error::{Error, Result};

/// Dense row-major 2-D map. Carrier for density maps, rollout maps and masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Grid2D {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("grid dims must be positive, got {width}x{height}")));
        }
        if values.len() != width * height {
            return Err(Error::Shape(format!("{} values for a {width}x{height} grid", values.len())));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { width, height, values })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "grid dims must be positive");
        assert!(value.is_finite());
        Self { width, height, values: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.values[y * self.width + x] = value;
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_constant(&self) -> bool {
        self.min() == self.max()
    }

    pub fn ensure_same_dims(&self, other: &Grid2D) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Min-max normalised copy. Constant maps become all zeros; the flag
    /// reports that case.
    pub fn min_max_normalised(&self) -> (Grid2D, bool) {
        let (values, flat) = crate::scalar::min_max_normalise(&self.values);
        (Grid2D { width: self.width, height: self.height, values }, flat)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Grid2D> {
        Grid2D::new(self.width, self.height, self.values.iter().map(|&v| f(v)).collect())
    }
}

/// Per-image raw attention: `layers × heads × tokens × tokens`, row-major.
/// Token 0 is the class token.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionStack {
    layers: usize,
    heads: usize,
    tokens: usize,
    values: Vec<f64>,
}

/// Row-sum tolerance for accepted attention stacks.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

impl AttentionStack {
    pub fn new(layers: usize, heads: usize, tokens: usize, values: Vec<f64>) -> Result<Self> {
        if layers == 0 || heads == 0 || tokens == 0 {
            return Err(Error::Shape(format!(
                "attention stack dims must be positive, got {layers}x{heads}x{tokens}x{tokens}"
            )));
        }
        let expected = layers * heads * tokens * tokens;
        if values.len() != expected {
            return Err(Error::Shape(format!(
                "{} values for a {layers}x{heads}x{tokens}x{tokens} stack",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let stack = Self { layers, heads, tokens, values };
        stack.check_row_stochastic(ROW_SUM_TOLERANCE)?;
        Ok(stack)
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn tokens(&self) -> usize {
        self.tokens
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.layers, self.heads, self.tokens, self.tokens]
    }

    /// The `tokens × tokens` matrix for one layer and head.
    pub fn matrix(&self, layer: usize, head: usize) -> &[f64] {
        let n = self.tokens * self.tokens;
        let start = (layer * self.heads + head) * n;
        &self.values[start..start + n]
    }

    pub fn check_row_stochastic(&self, tolerance: f64) -> Result<()> {
        let t = self.tokens;
        for (r, row) in self.values.chunks_exact(t).enumerate() {
            if let Some(c) = row.iter().position(|&v| v < 0.0) {
                return Err(Error::Invariant(format!("negative attention weight in row {r}, column {c}")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > tolerance {
                let per_layer = self.heads * t;
                return Err(Error::Invariant(format!(
                    "attention row sums to {s} (layer {}, head {}, row {})",
                    r / per_layer,
                    (r % per_layer) / t,
                    r % t
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length() {
        assert!(matches!(Grid2D::new(2, 2, vec![0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(Grid2D::new(2, 1, vec![0.0, f64::NAN]), Err(Error::NonFinite { index: 1 })));
    }

    #[test]
    fn stack_rejects_row_sum_violation() {
        let mut v = vec![0.5; 4];
        v[0] = 0.6;
        assert!(matches!(AttentionStack::new(1, 1, 2, v), Err(Error::Invariant(_))));
    }

    #[test]
    fn stack_accepts_within_tolerance() {
        let v = vec![0.5 + 4e-5, 0.5, 0.5, 0.5];
        assert!(AttentionStack::new(1, 1, 2, v).is_ok());
    }

    #[test]
    fn matrix_slices_by_layer_and_head() {
        let t = 2;
        let mut v = Vec::new();
        for k in 0..4 {
            let a = 0.1 * k as f64;
            v.extend_from_slice(&[a, 1.0 - a, 0.5, 0.5]);
        }
        let s = AttentionStack::new(2, 2, t, v).unwrap();
        assert!((s.matrix(1, 0)[0] - 0.2).abs() < 1e-15);
        assert!((s.matrix(1, 1)[0] - 0.3).abs() < 1e-15);
    }
}
