//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Every recorded node stores the partial derivative of its value with
//! respect to each variable parent. Values without a tape are constants and
//! never appear as parents, so frozen parameters cost nothing to backprop.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use gaze_align_core::Real;

#[derive(Default)]
struct Inner {
    /// `ends[i]` is one past the last edge of node `i`.
    ends: Vec<u32>,
    edges: Vec<(u32, f64)>,
}

#[derive(Default)]
pub struct Tape {
    inner: RefCell<Inner>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pre-sized tape, to avoid regrowth on large graphs.
    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        Self { inner: RefCell::new(Inner { ends: Vec::with_capacity(nodes), edges: Vec::with_capacity(edges) }) }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn edge_count(&self) -> usize {
        self.inner.borrow().edges.len()
    }

    /// A new independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        self.push(value, std::iter::empty())
    }

    fn push(&self, val: f64, parents: impl IntoIterator<Item = (u32, f64)>) -> Var<'_> {
        let mut inner = self.inner.borrow_mut();
        inner.edges.extend(parents);
        let end = inner.edges.len() as u32;
        let idx = inner.ends.len() as u32;
        inner.ends.push(end);
        Var { tape: Some(self), idx, val }
    }

    /// Adjoints of every node with respect to `output`.
    pub fn gradients(&self, output: Var<'_>) -> Gradients {
        let inner = self.inner.borrow();
        let mut adj = vec![0.0; inner.ends.len()];
        let Some(tape) = output.tape else {
            return Gradients { adj };
        };
        debug_assert!(std::ptr::eq(tape, self), "output belongs to another tape");
        adj[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            let start = if i == 0 { 0 } else { inner.ends[i - 1] as usize };
            for &(parent, partial) in &inner.edges[start..inner.ends[i] as usize] {
                adj[parent as usize] += g * partial;
            }
        }
        Gradients { adj }
    }
}

pub struct Gradients {
    adj: Vec<f64>,
}

impl Gradients {
    /// Derivative with respect to `v`; zero for constants.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        match v.tape {
            Some(_) => self.adj[v.idx as usize],
            None => 0.0,
        }
    }
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: Option<&'t Tape>,
    idx: u32,
    val: f64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.tape {
            Some(_) => write!(f, "Var#{}({})", self.idx, self.val),
            None => write!(f, "Const({})", self.val),
        }
    }
}

impl<'t> Var<'t> {
    pub fn is_constant(&self) -> bool {
        self.tape.is_none()
    }

    fn unary(self, val: f64, partial: f64) -> Self {
        match self.tape {
            None => Var::constant(val),
            Some(t) => t.push(val, [(self.idx, partial)]),
        }
    }

    fn binary(self, other: Self, val: f64, da: f64, db: f64) -> Self {
        match (self.tape, other.tape) {
            (None, None) => Var::constant(val),
            (Some(t), None) => t.push(val, [(self.idx, da)]),
            (None, Some(t)) => t.push(val, [(other.idx, db)]),
            (Some(t), Some(_)) => t.push(val, [(self.idx, da), (other.idx, db)]),
        }
    }

    fn first_tape(xs: &[Self]) -> Option<&'t Tape> {
        xs.iter().find_map(|x| x.tape)
    }
}

impl Add for Var<'_> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.binary(o, self.val + o.val, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.binary(o, self.val - o.val, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        self.binary(o, self.val * o.val, o.val, self.val)
    }
}

impl Div for Var<'_> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.val;
        let val = self.val / o.val;
        self.binary(o, val, inv, -val * inv)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Var<'_> {
    type Output = Self;
    fn add(self, c: f64) -> Self {
        self.unary(self.val + c, 1.0)
    }
}

impl Sub<f64> for Var<'_> {
    type Output = Self;
    fn sub(self, c: f64) -> Self {
        self.unary(self.val - c, 1.0)
    }
}

impl Mul<f64> for Var<'_> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.unary(self.val * c, c)
    }
}

impl Div<f64> for Var<'_> {
    type Output = Self;
    fn div(self, c: f64) -> Self {
        self.unary(self.val / c, 1.0 / c)
    }
}

impl Real for Var<'_> {
    fn constant(value: f64) -> Self {
        Var { tape: None, idx: 0, val: value }
    }

    fn value(self) -> f64 {
        self.val
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }

    fn recip(self) -> Self {
        let r = 1.0 / self.val;
        self.unary(r, -r * r)
    }

    fn sum(xs: &[Self]) -> Self {
        let val = xs.iter().map(|x| x.val).sum();
        match Self::first_tape(xs) {
            None => Var::constant(val),
            Some(t) => t.push(val, xs.iter().filter(|x| x.tape.is_some()).map(|x| (x.idx, 1.0))),
        }
    }

    fn dot(a: &[Self], b: &[Self]) -> Self {
        debug_assert_eq!(a.len(), b.len());
        let val = a.iter().zip(b).map(|(x, y)| x.val * y.val).sum();
        let tape = Self::first_tape(a).or_else(|| Self::first_tape(b));
        match tape {
            None => Var::constant(val),
            Some(t) => {
                let edges = a.iter().zip(b).flat_map(|(x, y)| {
                    let ex = x.tape.map(|_| (x.idx, y.val));
                    let ey = y.tape.map(|_| (y.idx, x.val));
                    ex.into_iter().chain(ey)
                });
                t.push(val, edges)
            }
        }
    }

    fn weighted_sum(weights: &[f64], xs: &[Self]) -> Self {
        debug_assert_eq!(weights.len(), xs.len());
        let val = weights.iter().zip(xs).map(|(w, x)| w * x.val).sum();
        match Self::first_tape(xs) {
            None => Var::constant(val),
            Some(t) => t.push(
                val,
                weights.iter().zip(xs).filter(|(w, x)| x.tape.is_some() && **w != 0.0).map(|(&w, x)| (x.idx, w)),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule_and_chain() {
        let t = Tape::new();
        let x = t.var(3.0);
        let y = t.var(-2.0);
        // f = x·y + exp(x / y)
        let f = x * y + (x / y).exp();
        let g = t.gradients(f);
        let e = (3.0f64 / -2.0).exp();
        assert!((g.wrt(x) - (-2.0 + e / -2.0)).abs() < 1e-14);
        assert!((g.wrt(y) - (3.0 + e * (-3.0 / 4.0))).abs() < 1e-14);
    }

    #[test]
    fn constants_are_not_recorded() {
        let t = Tape::new();
        let c = Var::constant(2.0);
        let d = c * c + 1.0;
        assert!(d.is_constant());
        assert_eq!(t.len(), 0);
        let x = t.var(1.5);
        let y = Var::dot(&[x, c, x], &[c, c, x]);
        assert_eq!(y.value(), 3.0 + 4.0 + 2.25);
        assert_eq!(t.gradients(y).wrt(x), 2.0 + 3.0);
        assert_eq!(t.gradients(y).wrt(c), 0.0);
    }

    #[test]
    fn fused_ops_match_unfused() {
        let t = Tape::new();
        let xs: Vec<Var> = [0.3, -1.2, 2.5].iter().map(|&v| t.var(v)).collect();
        let w = [0.5, 2.0, -1.0];
        let fused = Var::weighted_sum(&w, &xs).tanh();
        let plain = (xs[0] * 0.5 + xs[1] * 2.0 - xs[2]).tanh();
        let (gf, gp) = (t.gradients(fused), t.gradients(plain));
        for &x in &xs {
            assert!((gf.wrt(x) - gp.wrt(x)).abs() < 1e-15);
        }
        let s = Var::sum(&xs).sqrt().ln().recip();
        let g = t.gradients(s);
        let total: f64 = 0.3 - 1.2 + 2.5;
        let expected = -1.0 / (0.5 * total.ln()).powi(2) * 0.5 / total;
        assert!((g.wrt(xs[0]) - expected).abs() < 1e-12);
    }
}
