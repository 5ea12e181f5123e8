//! Reverse-mode automatic differentiation over dense vectors and matrices.
//!
//! Every operation appends a node holding its forward value and the indices
//! of its operands. [`Tape::backward`] walks the nodes in exact reverse order
//! and accumulates vector-Jacobian products, so one sweep yields the gradient
//! of a scalar output with respect to every node. Parameters are leaves tagged
//! with an index into the caller's flat parameter vector; [`Gradients::scatter_params`]
//! folds their gradients back into that vector.
//!
//! A tape is single-threaded by construction (`&mut self` on every op).
//! Independent tapes can be built in parallel over shared read-only
//! parameters.

use std::sync::atomic::{AtomicU32, Ordering};

use super::activation::{softmax_vjp, sparsemax_vjp, Activation};
use super::tensor::{dot, matrix_dims, matvec_acc, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

/// Handle to a value recorded on a particular [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u32,
    idx: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.idx as usize
    }
}

/// Where a leaf's parameter values live in the caller's flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlot {
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamSlot),
    Affine { w: usize, b: usize, x: usize, m: usize, n: usize },
    MatVec { w: usize, x: usize, m: usize, n: usize },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    OneMinus(usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Dot(usize, usize),
    Stack(Vec<usize>),
    Concat(Vec<usize>),
    Mean(Vec<usize>),
    WeightedSum { weights: usize, items: Vec<usize> },
    Softmax(usize),
    Sparsemax(usize),
    Bce { pred: usize, target: f64 },
    Sum(Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of the primitive operations of one forward pass.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Probabilities passed to the cross-entropy node are clamped to
/// `[BCE_EPS, 1 − BCE_EPS]`.
pub const BCE_EPS: f64 = 1e-12;

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let idx = self.nodes.len() as u32;
        self.nodes.push(Node { value, op });
        Var { tape: self.id, idx }
    }

    fn resolve(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index() >= self.nodes.len() {
            return Err(Error::Usage(format!(
                "value {} does not belong to this tape",
                v.idx
            )));
        }
        Ok(v.index())
    }

    fn node(&self, i: usize) -> &Tensor {
        &self.nodes[i].value
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        Ok(self.node(self.resolve(v)?))
    }

    /// Untracked input; receives a gradient but is not a parameter.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Parameter leaf whose gradient is scattered back into `slot`.
    pub fn param(&mut self, value: Tensor, slot: ParamSlot) -> Result<Var> {
        if value.len() != slot.len {
            return Err(Error::dim("param", value.shape(), &[slot.len]));
        }
        Ok(self.push(value, Op::Param(slot)))
    }

    pub fn affine(&mut self, w: Var, b: Var, x: Var) -> Result<Var> {
        let (w, b, x) = (self.resolve(w)?, self.resolve(b)?, self.resolve(x)?);
        let out = super::tensor::affine(self.node(w), self.node(b), self.node(x))?;
        let (m, n) = matrix_dims(self.node(w), "affine")?;
        Ok(self.push(out, Op::Affine { w, b, x, m, n }))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let (w, x) = (self.resolve(w)?, self.resolve(x)?);
        let (m, n) = matrix_dims(self.node(w), "matvec")?;
        if !self.node(x).is_vector() || self.node(x).len() != n {
            return Err(Error::dim("matvec", self.node(w).shape(), self.node(x).shape()));
        }
        let mut out = vec![0.0; m];
        matvec_acc(self.node(w).data(), m, n, self.node(x).data(), &mut out);
        Ok(self.push(Tensor::vector(out), Op::MatVec { w, x, m, n }))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(usize, usize) -> Op,
    ) -> Result<Var> {
        let (a, b) = (self.resolve(a)?, self.resolve(b)?);
        let (ta, tb) = (self.node(a), self.node(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(out, op(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: impl Fn(usize) -> Op) -> Result<Var> {
        let a = self.resolve(a)?;
        let t = self.node(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|v| f(*v)).collect())?;
        Ok(self.push(out, op(a)))
    }

    /// `1 − a` elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |v| 1.0 - v, Op::OneMinus)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.unary(a, |v| v * factor, |i| Op::Scale(i, factor))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, sigmoid, Op::Sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::tanh, Op::Tanh)
    }

    /// Inner product of two vectors, giving a scalar.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b) = (self.resolve(a)?, self.resolve(b)?);
        let (ta, tb) = (self.node(a), self.node(b));
        if !ta.is_vector() || ta.shape() != tb.shape() {
            return Err(Error::dim("dot", ta.shape(), tb.shape()));
        }
        let v = dot(ta.data(), tb.data());
        Ok(self.push(Tensor::scalar(v), Op::Dot(a, b)))
    }

    /// Stack scalars into a vector.
    pub fn stack(&mut self, items: &[Var]) -> Result<Var> {
        if items.is_empty() {
            return Err(Error::Domain("stack of zero values".into()));
        }
        let idx = self.resolve_all(items)?;
        let mut data = Vec::with_capacity(idx.len());
        for &i in &idx {
            data.push(self.node(i).item()?);
        }
        Ok(self.push(Tensor::vector(data), Op::Stack(idx)))
    }

    pub fn concat(&mut self, items: &[Var]) -> Result<Var> {
        if items.is_empty() {
            return Err(Error::Domain("concat of zero values".into()));
        }
        let idx = self.resolve_all(items)?;
        let mut data = Vec::new();
        for &i in &idx {
            let t = self.node(i);
            if !t.is_vector() {
                return Err(Error::dim("concat", t.shape(), &[t.len()]));
            }
            data.extend_from_slice(t.data());
        }
        Ok(self.push(Tensor::vector(data), Op::Concat(idx)))
    }

    /// Elementwise mean of equally shaped tensors.
    pub fn mean(&mut self, items: &[Var]) -> Result<Var> {
        let idx = self.resolve_all(items)?;
        let first = idx
            .first()
            .ok_or_else(|| Error::Domain("mean of zero values".into()))?;
        let shape = self.node(*first).shape().to_vec();
        let mut acc = vec![0.0; self.node(*first).len()];
        for &i in &idx {
            let t = self.node(i);
            if t.shape() != shape.as_slice() {
                return Err(Error::dim("mean", &shape, t.shape()));
            }
            acc.iter_mut().zip(t.data()).for_each(|(a, v)| *a += v);
        }
        let k = idx.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        Ok(self.push(Tensor::new(shape, acc)?, Op::Mean(idx)))
    }

    /// `Σ_n weights[n] · items[n]`.
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Result<Var> {
        let w = self.resolve(weights)?;
        let idx = self.resolve_all(items)?;
        let wt = self.node(w);
        if !wt.is_vector() || wt.len() != idx.len() || idx.is_empty() {
            return Err(Error::dim("weighted_sum", wt.shape(), &[idx.len()]));
        }
        let shape = self.node(idx[0]).shape().to_vec();
        let mut acc = vec![0.0; self.node(idx[0]).len()];
        for (&i, &a) in idx.iter().zip(wt.data()) {
            let t = self.node(i);
            if t.shape() != shape.as_slice() {
                return Err(Error::dim("weighted_sum", &shape, t.shape()));
            }
            acc.iter_mut().zip(t.data()).for_each(|(s, v)| *s += a * v);
        }
        Ok(self.push(Tensor::new(shape, acc)?, Op::WeightedSum { weights: w, items: idx }))
    }

    pub fn activate(&mut self, a: Var, activation: Activation) -> Result<Var> {
        let i = self.resolve(a)?;
        let out = Tensor::vector(activation.apply(self.node(i).data())?);
        let op = match activation {
            Activation::Softmax => Op::Softmax(i),
            Activation::Sparsemax => Op::Sparsemax(i),
        };
        Ok(self.push(out, op))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        self.activate(a, Activation::Softmax)
    }

    pub fn sparsemax(&mut self, a: Var) -> Result<Var> {
        self.activate(a, Activation::Sparsemax)
    }

    /// Binary cross-entropy `−[y ln p + (1 − y) ln(1 − p)]` of a scalar probability.
    pub fn bce(&mut self, pred: Var, target: f64) -> Result<Var> {
        let i = self.resolve(pred)?;
        let p = self.node(i).item()?.clamp(BCE_EPS, 1.0 - BCE_EPS);
        let v = -(target * p.ln() + (1.0 - target) * (1.0 - p).ln());
        Ok(self.push(Tensor::scalar(v), Op::Bce { pred: i, target }))
    }

    /// Sum of scalars.
    pub fn sum(&mut self, items: &[Var]) -> Result<Var> {
        if items.is_empty() {
            return Err(Error::Domain("sum of zero values".into()));
        }
        let idx = self.resolve_all(items)?;
        let mut total = 0.0;
        for &i in &idx {
            total += self.node(i).item()?;
        }
        Ok(self.push(Tensor::scalar(total), Op::Sum(idx)))
    }

    fn resolve_all(&self, items: &[Var]) -> Result<Vec<usize>> {
        items.iter().map(|v| self.resolve(*v)).collect()
    }

    /// Gradient of the scalar `output` with respect to every node recorded
    /// before it. Nodes are visited in exact reverse order of recording.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.resolve(output)?;
        if !self.node(out).is_scalar() {
            return Err(Error::Usage(format!(
                "backward needs a scalar output, got shape {:?}",
                self.node(out).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; out + 1];
        grads[out] = Some(vec![1.0]);
        for i in (0..=out).rev() {
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else { continue };
            self.propagate(i, g, lower);
        }
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        macro_rules! acc {
            ($j:expr) => {{
                let j = $j;
                grads[j].get_or_insert_with(|| vec![0.0; self.nodes[j].value.len()])
            }};
        }
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Affine { w, b, x, m, n } => {
                accumulate_matvec_grads(self.node(*w), self.node(*x), g, *m, *n, *w, *x, grads);
                let gb = grads[*b].get_or_insert_with(|| vec![0.0; *m]);
                gb.iter_mut().zip(g).for_each(|(a, v)| *a += v);
            }
            Op::MatVec { w, x, m, n } => {
                accumulate_matvec_grads(self.node(*w), self.node(*x), g, *m, *n, *w, *x, grads);
            }
            Op::Add(a, b) => {
                add_into(acc!(*a), g);
                add_into(acc!(*b), g);
            }
            Op::Sub(a, b) => {
                add_into(acc!(*a), g);
                acc!(*b).iter_mut().zip(g).for_each(|(s, v)| *s -= v);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.node(*a).data(), self.node(*b).data());
                let ga = acc!(*a);
                for ((s, gi), bi) in ga.iter_mut().zip(g).zip(vb) {
                    *s += gi * bi;
                }
                let gb = acc!(*b);
                for ((s, gi), ai) in gb.iter_mut().zip(g).zip(va) {
                    *s += gi * ai;
                }
            }
            Op::OneMinus(a) => acc!(*a).iter_mut().zip(g).for_each(|(s, v)| *s -= v),
            Op::Scale(a, f) => acc!(*a).iter_mut().zip(g).for_each(|(s, v)| *s += v * f),
            Op::Sigmoid(a) => {
                let y = node.value.data();
                for ((s, gi), yi) in acc!(*a).iter_mut().zip(g).zip(y) {
                    *s += gi * yi * (1.0 - yi);
                }
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                for ((s, gi), yi) in acc!(*a).iter_mut().zip(g).zip(y) {
                    *s += gi * (1.0 - yi * yi);
                }
            }
            Op::Dot(a, b) => {
                let (va, vb) = (self.node(*a).data(), self.node(*b).data());
                let g0 = g[0];
                acc!(*a).iter_mut().zip(vb).for_each(|(s, v)| *s += g0 * v);
                acc!(*b).iter_mut().zip(va).for_each(|(s, v)| *s += g0 * v);
            }
            Op::Stack(items) => {
                for (&j, gi) in items.iter().zip(g) {
                    acc!(j)[0] += gi;
                }
            }
            Op::Concat(items) => {
                let mut offset = 0;
                for &j in items {
                    let len = self.nodes[j].value.len();
                    add_into(acc!(j), &g[offset..offset + len]);
                    offset += len;
                }
            }
            Op::Mean(items) => {
                let k = items.len() as f64;
                for &j in items {
                    acc!(j).iter_mut().zip(g).for_each(|(s, v)| *s += v / k);
                }
            }
            Op::WeightedSum { weights, items } => {
                let w = self.node(*weights).data();
                let mut gw = vec![0.0; items.len()];
                for ((&j, a), gwi) in items.iter().zip(w).zip(gw.iter_mut()) {
                    *gwi = dot(g, self.node(j).data());
                    acc!(j).iter_mut().zip(g).for_each(|(s, v)| *s += a * v);
                }
                add_into(acc!(*weights), &gw);
            }
            Op::Softmax(a) => softmax_vjp(node.value.data(), g, acc!(*a)),
            Op::Sparsemax(a) => sparsemax_vjp(node.value.data(), g, acc!(*a)),
            Op::Bce { pred, target } => {
                let raw = self.node(*pred).data()[0];
                // Zero gradient where the clamp is active.
                if raw > BCE_EPS && raw < 1.0 - BCE_EPS {
                    acc!(*pred)[0] += g[0] * (raw - target) / (raw * (1.0 - raw));
                }
            }
            Op::Sum(items) => {
                for &j in items {
                    acc!(j)[0] += g[0];
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn accumulate_matvec_grads(
    w: &Tensor,
    x: &Tensor,
    g: &[f64],
    m: usize,
    n: usize,
    wi: usize,
    xi: usize,
    grads: &mut [Option<Vec<f64>>],
) {
    let gw = grads[wi].get_or_insert_with(|| vec![0.0; m * n]);
    let xd = x.data();
    for (row, gr) in gw.chunks_exact_mut(n).zip(g) {
        for (s, xv) in row.iter_mut().zip(xd) {
            *s += gr * xv;
        }
    }
    let gx = grads[xi].get_or_insert_with(|| vec![0.0; n]);
    for (row, gr) in w.data().chunks_exact(n).zip(g) {
        for (s, wv) in gx.iter_mut().zip(row) {
            *s += gr * wv;
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of one backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    tape: u32,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not influence the
    /// output. Values recorded after the output have no gradient entry.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Result<Vec<f64>> {
        let i = tape.resolve(v)?;
        if v.tape != self.tape {
            return Err(Error::Usage("gradients come from another tape".into()));
        }
        let len = tape.node(i).len();
        Ok(self
            .grads
            .get(i)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| vec![0.0; len]))
    }

    /// Adds every parameter leaf's gradient into `flat` at its slot.
    pub fn scatter_params(&self, tape: &Tape, flat: &mut [f64]) -> Result<()> {
        if tape.id != self.tape {
            return Err(Error::Usage("gradients come from another tape".into()));
        }
        for (node, g) in tape.nodes.iter().zip(&self.grads) {
            if let (Op::Param(slot), Some(g)) = (&node.op, g) {
                let dst = flat
                    .get_mut(slot.offset..slot.offset + slot.len)
                    .ok_or_else(|| Error::Usage("parameter slot out of range".into()))?;
                add_into(dst, g);
            }
        }
        Ok(())
    }
}
