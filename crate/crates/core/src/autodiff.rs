//! Tape-based reverse-mode differentiation over real tensor operations.
//!
//! Every operation appends a node holding its forward value. [`Graph::backward`]
//! replays the tape in reverse and accumulates adjoints. Quaternion layers enter
//! the tape through [`Graph::quat_assemble`], which lowers a `[4, M, N]` weight
//! into its structured `4M × 4N` real matrix, so no quaternion-specific
//! backward rules are needed.

use crate::error::{Error, Result};
use crate::loss;
use crate::quat::left_mul_pattern;
use crate::tensor::{gemm, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    /// `x · wᵀ` with `x: [B, K]`, `w: [N, K]`.
    MatMulT(Var, Var),
    Add(Var, Var),
    /// Broadcast-add a `[N]` bias to every row of `[B, N]`.
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    SliceCols {
        x: Var,
        start: usize,
        len: usize,
    },
    /// Concatenation along the leading axis.
    Concat(Vec<Var>),
    QuatAssemble(Var),
    /// `Σ x ⊙ c` for a constant `c`.
    WeightedSum(Var, Tensor),
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records forward computations for one backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Adjoint of `v` after [`backward`](Self::backward). `None` if `v` does
    /// not influence the differentiated output.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul_t(&mut self, x: Var, w: Var) -> Result<Var> {
        let out = self.value(x).matmul_t(self.value(w))?;
        Ok(self.push(out, Op::MatMulT(x, w)))
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(sa, sb));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        Tensor::new(ta.shape(), ta.data().iter().zip(tb.data()).map(|(&p, &q)| f(p, q)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, |p, q| p + q)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, |p, q| p * q)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, n) = self.value(x).dims2()?;
        let b = self.value(bias);
        if b.shape() != [n] {
            return Err(Error::shape(&[n], b.shape()));
        }
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        self.push(out, Op::Scale(x, factor))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        if start + len > cols {
            return Err(Error::Input(format!("column slice {start}..{} out of {cols}", start + len)));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + len]);
        }
        let out = Tensor::new(&[rows, len], data)?;
        Ok(self.push(out, Op::SliceCols { x, start, len }))
    }

    /// Concatenates along the leading axis. Trailing extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::Input("empty concat".into()))?;
        let tail = self.value(*first).shape()[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for p in parts {
            let t = self.value(*p);
            if t.shape()[1..] != tail[..] {
                return Err(Error::shape(&tail, &t.shape()[1..]));
            }
            lead += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        let out = Tensor::new(&shape, data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Lowers a `[4, M, N]` quaternion weight to its `4M × 4N` real matrix.
    pub fn quat_assemble(&mut self, w: Var) -> Result<Var> {
        let out = assemble_blocks(self.value(w))?;
        Ok(self.push(out, Op::QuatAssemble(w)))
    }

    pub fn weighted_sum(&mut self, x: Var, weights: Tensor) -> Result<Var> {
        let t = self.value(x);
        if t.shape() != weights.shape() {
            return Err(Error::shape(t.shape(), weights.shape()));
        }
        let s = t.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum();
        Ok(self.push(Tensor::scalar(s), Op::WeightedSum(x, weights)))
    }

    /// Mean softmax cross-entropy of `[R, K]` logits against `R` class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let l = loss::cross_entropy(self.value(logits), targets)?;
        Ok(self.push(Tensor::scalar(l), Op::SoftmaxCrossEntropy { logits, targets: targets.to_vec() }))
    }

    /// Differentiates a scalar output with unit seed.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let numel = self
            .nodes
            .get(output.0)
            .ok_or_else(|| Error::State("backward called before any forward computation".into()))?
            .value
            .len();
        if numel != 1 {
            return Err(Error::Input(format!("backward needs a scalar output, got {numel} elements")));
        }
        self.backward_with(output, Tensor::full(self.value(output).shape(), 1.0))
    }

    /// Propagates an explicit upstream gradient from `output`.
    pub fn backward_with(&mut self, output: Var, upstream: Tensor) -> Result<()> {
        let node = self
            .nodes
            .get(output.0)
            .ok_or_else(|| Error::State("backward called before any forward computation".into()))?;
        if node.value.shape() != upstream.shape() {
            return Err(Error::shape(node.value.shape(), upstream.shape()));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[output.0] = Some(upstream);
        for idx in (0..=output.0).rev() {
            let Some(g) = self.grads[idx].take() else { continue };
            self.propagate(idx, &g)?;
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Tensor) -> Result<()> {
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn propagate(&mut self, idx: usize, g: &Tensor) -> Result<()> {
        let op = self.nodes[idx].op.clone();
        match op {
            Op::Leaf => {}
            Op::MatMulT(x, w) => {
                // out = x wᵀ: dx = g w, dw = gᵀ x
                let dx = g.matmul(self.value(w))?;
                let (b, n) = g.dims2()?;
                let (_, k) = self.value(x).dims2()?;
                let mut dw = Tensor::zeros(&[n, k]);
                gemm(n, b, k, g.data(), (1, n), self.value(x).data(), (k, 1), dw.data_mut(), 0.0);
                self.accumulate(x, dx)?;
                self.accumulate(w, dw)?;
            }
            Op::Add(a, b) => {
                self.accumulate(a, g.clone())?;
                self.accumulate(b, g.clone())?;
            }
            Op::AddRow(x, bias) => {
                let n = self.value(bias).len();
                let mut db = Tensor::zeros(&[n]);
                for row in g.data().chunks(n) {
                    for (d, v) in db.data_mut().iter_mut().zip(row) {
                        *d += v;
                    }
                }
                self.accumulate(x, g.clone())?;
                self.accumulate(bias, db)?;
            }
            Op::Mul(a, b) => {
                let da = elementwise(g, self.value(b), |p, q| p * q);
                let db = elementwise(g, self.value(a), |p, q| p * q);
                self.accumulate(a, da)?;
                self.accumulate(b, db)?;
            }
            Op::Scale(x, f) => self.accumulate(x, g.map(|v| v * f))?,
            Op::Sigmoid(x) => {
                let d = elementwise(g, &self.nodes[idx].value, |gv, s| gv * s * (1.0 - s));
                self.accumulate(x, d)?;
            }
            Op::Tanh(x) => {
                let d = elementwise(g, &self.nodes[idx].value, |gv, t| gv * (1.0 - t * t));
                self.accumulate(x, d)?;
            }
            Op::SliceCols { x, start, len } => {
                let (rows, cols) = self.value(x).dims2()?;
                let mut d = Tensor::zeros(&[rows, cols]);
                for r in 0..rows {
                    d.data_mut()[r * cols + start..r * cols + start + len]
                        .copy_from_slice(&g.data()[r * len..(r + 1) * len]);
                }
                self.accumulate(x, d)?;
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let shape = self.value(p).shape().to_vec();
                    let n = self.value(p).len();
                    let d = Tensor::new(&shape, g.data()[offset..offset + n].to_vec())?;
                    offset += n;
                    self.accumulate(p, d)?;
                }
            }
            Op::QuatAssemble(w) => {
                let shape = self.value(w).shape().to_vec();
                let d = disassemble_blocks_grad(g, shape[1], shape[2]);
                self.accumulate(w, d)?;
            }
            Op::WeightedSum(x, weights) => {
                let s = g.data()[0];
                self.accumulate(x, weights.map(|c| c * s))?;
            }
            Op::SoftmaxCrossEntropy { logits, targets } => {
                let s = g.data()[0];
                let d = loss::cross_entropy_grad(self.value(logits), &targets)?.map(|v| v * s);
                self.accumulate(logits, d)?;
            }
        }
        Ok(())
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect();
    Tensor::new(a.shape(), data).expect("operands share a shape")
}

/// Builds the `4M × 4N` split-layout matrix from `[4, M, N]` component blocks.
///
/// Block `(a, b)` (output component `a`, input component `b`) equals
/// `sign · W_c` where `(sign, c)` comes from the left-multiplication pattern.
pub(crate) fn assemble_blocks(w: &Tensor) -> Result<Tensor> {
    let (m, n) = match w.shape() {
        [4, m, n] => (*m, *n),
        other => return Err(Error::shape(&[4, 0, 0], other)),
    };
    let mut out = Tensor::zeros(&[4 * m, 4 * n]);
    let src = w.data();
    let dst = out.data_mut();
    let cols = 4 * n;
    for a in 0..4 {
        for b in 0..4 {
            let (sign, c) = left_mul_pattern(a, b);
            let block = &src[c * m * n..(c + 1) * m * n];
            for row in 0..m {
                let d = &mut dst[(a * m + row) * cols + b * n..(a * m + row) * cols + (b + 1) * n];
                for (o, v) in d.iter_mut().zip(&block[row * n..(row + 1) * n]) {
                    *o = sign * v;
                }
            }
        }
    }
    Ok(out)
}

fn disassemble_blocks_grad(g: &Tensor, m: usize, n: usize) -> Tensor {
    let mut out = Tensor::zeros(&[4, m, n]);
    let cols = 4 * n;
    let src = g.data();
    let dst = out.data_mut();
    for a in 0..4 {
        for b in 0..4 {
            let (sign, c) = left_mul_pattern(a, b);
            for row in 0..m {
                let s = &src[(a * m + row) * cols + b * n..(a * m + row) * cols + (b + 1) * n];
                let d = &mut dst[c * m * n + row * n..c * m * n + (row + 1) * n];
                for (o, v) in d.iter_mut().zip(s) {
                    *o += sign * v;
                }
            }
        }
    }
    out
}
