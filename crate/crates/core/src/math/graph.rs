//! Taped reverse-mode differentiation over small dense tensors.
//!
//! A [`Graph`] records every operation as a node appended to a tape. Node ids
//! only ever point backwards, so the tape order is a topological order and
//! [`Graph::backward`] is a single reverse sweep. One graph is built per
//! training step and dropped afterwards.
//!
//! ```
//! use maskgrad::math::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let w = g.param(Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap());
//! let s = g.constant(Tensor::vector(vec![1.0, 1.0]).unwrap());
//! let z = g.matvec(w, s).unwrap();
//! let loss = g.sum_squares(z).unwrap();
//! g.backward(loss).unwrap();
//! assert_eq!(g.grad(w).unwrap().values(), &[4.0, 4.0, 6.0, 6.0]);
//! ```

use super::simplex;
use super::tensor::Tensor;
use crate::error::{mismatch, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    MatVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRowBias(NodeId, NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    SumSquares(NodeId),
    RowSoftmax(NodeId),
    RowSparsemax(NodeId),
    Reshape(NodeId),
    SliceCols(NodeId, usize),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    grad: Option<Vec<f64>>,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backpropagated: bool,
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

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// Leaf treated as data: no gradient is accumulated for it.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last backward root w.r.t. `id`. `None` for constants
    /// and before backward has run.
    pub fn grad(&self, id: NodeId) -> Option<Tensor> {
        let node = &self.nodes[id.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::from_raw(node.value.shape().to_vec(), g.clone()))
    }

    pub fn reset_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.backpropagated = false;
    }

    fn push(&mut self, op: Op, value: Tensor, tracked: bool) -> NodeId {
        self.nodes.push(Node { op, value, grad: None, tracked });
        NodeId(self.nodes.len() - 1)
    }

    fn tracked(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].tracked)
    }

    fn matrix_dims(&self, id: NodeId, op: &'static str) -> Result<(usize, usize)> {
        match self.value(id).shape() {
            [r, c] => Ok((*r, *c)),
            other => Err(mismatch(op, "2-D operand", format!("{other:?}"))),
        }
    }

    /// `a · b` for `a: p×q`, `b: q×r`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (p, q) = self.matrix_dims(a, "matmul")?;
        let (q2, r) = self.matrix_dims(b, "matmul")?;
        if q != q2 {
            return Err(mismatch("matmul", q, q2));
        }
        let out = matmul_raw(self.value(a).values(), self.value(b).values(), p, q, r);
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(Op::MatMul(a, b), Tensor::from_raw(vec![p, r], out), tracked))
    }

    /// `a · bᵀ` for `a: p×q`, `b: r×q`. A batch of row vectors through a
    /// weight matrix stored as (out × in).
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (p, q) = self.matrix_dims(a, "matmul_bt")?;
        let (r, q2) = self.matrix_dims(b, "matmul_bt")?;
        if q != q2 {
            return Err(mismatch("matmul_bt", q, q2));
        }
        let av = self.value(a).values();
        let bv = self.value(b).values();
        let mut out = vec![0.0; p * r];
        for i in 0..p {
            let arow = &av[i * q..(i + 1) * q];
            for j in 0..r {
                out[i * r + j] = super::tensor::dot(arow, &bv[j * q..(j + 1) * q]);
            }
        }
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(Op::MatMulBt(a, b), Tensor::from_raw(vec![p, r], out), tracked))
    }

    /// `m · s` for `m: n×k` and a k-vector `s`.
    pub fn matvec(&mut self, m: NodeId, s: NodeId) -> Result<NodeId> {
        let z = super::tensor::matvec(self.value(m), self.value(s).values())?;
        if self.value(s).shape().len() != 1 {
            return Err(mismatch("matvec", "1-D vector", format!("{:?}", self.value(s).shape())));
        }
        let n = z.len();
        let tracked = self.tracked(&[m, s]);
        Ok(self.push(Op::MatVec(m, s), Tensor::from_raw(vec![n], z), tracked))
    }

    fn same_shape(&self, a: NodeId, b: NodeId, op: &'static str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(mismatch(op, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    fn zip_op(&mut self, a: NodeId, b: NodeId, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<NodeId> {
        self.same_shape(a, b, name)?;
        let out: Vec<f64> = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.value(a).shape().to_vec();
        let tracked = self.tracked(&[a, b]);
        Ok(self.push(op, Tensor::from_raw(shape, out), tracked))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    /// Adds a length-c bias to every row of a B×c matrix.
    pub fn add_row_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.matrix_dims(a, "add_row_bias")?;
        let b = self.value(bias).values();
        if b.len() != cols {
            return Err(mismatch("add_row_bias", cols, b.len()));
        }
        let mut out = self.value(a).values().to_vec();
        for r in 0..rows {
            for (o, bj) in out[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *o += bj;
            }
        }
        let tracked = self.tracked(&[a, bias]);
        Ok(self.push(Op::AddRowBias(a, bias), Tensor::from_raw(vec![rows, cols], out), tracked))
    }

    fn map_op(&mut self, a: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let v = self.value(a);
        let out = v.values().iter().map(|x| f(*x)).collect();
        let shape = v.shape().to_vec();
        let tracked = self.tracked(&[a]);
        self.push(op, Tensor::from_raw(shape, out), tracked)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map_op(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.map_op(a, Op::Exp(a), f64::exp)
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.map_op(a, Op::Scale(a, c), |x| c * x)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total = self.value(a).values().iter().sum();
        let tracked = self.tracked(&[a]);
        self.push(Op::Sum(a), Tensor::from_raw(vec![1], vec![total]), tracked)
    }

    /// Σ xᵢ² as a scalar.
    pub fn sum_squares(&mut self, a: NodeId) -> Result<NodeId> {
        let total = self.value(a).values().iter().map(|x| x * x).sum();
        let tracked = self.tracked(&[a]);
        Ok(self.push(Op::SumSquares(a), Tensor::from_raw(vec![1], vec![total]), tracked))
    }

    fn row_op(&mut self, a: NodeId, op: Op, f: fn(&[f64]) -> Vec<f64>) -> Result<NodeId> {
        let v = self.value(a);
        let (rows, cols) = v.dims2();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            out.extend(f(&v.values()[r * cols..(r + 1) * cols]));
        }
        let shape = v.shape().to_vec();
        let tracked = self.tracked(&[a]);
        Ok(self.push(op, Tensor::from_raw(shape, out), tracked))
    }

    pub fn row_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.row_op(a, Op::RowSoftmax(a), simplex::softmax_row)
    }

    pub fn row_sparsemax(&mut self, a: NodeId) -> Result<NodeId> {
        self.row_op(a, Op::RowSparsemax(a), simplex::sparsemax_row)
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(a).reshaped(shape)?;
        let tracked = self.tracked(&[a]);
        Ok(self.push(Op::Reshape(a), value, tracked))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (rows, cols) = self.matrix_dims(a, "slice_cols")?;
        if start + len > cols {
            return Err(mismatch("slice_cols", format!("≤ {cols} columns"), start + len));
        }
        let v = self.value(a).values();
        let out = (0..rows).flat_map(|r| v[r * cols + start..r * cols + start + len].iter().copied()).collect();
        let tracked = self.tracked(&[a]);
        Ok(self.push(Op::SliceCols(a, start), Tensor::from_raw(vec![rows, len], out), tracked))
    }

    /// Accumulates d(root)/d(node) into every tracked node.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.backpropagated {
            return Err(Error::AlreadyBackpropagated);
        }
        let shape = self.value(root).shape();
        if self.value(root).len() != 1 {
            return Err(Error::NonScalarRoot(shape.to_vec()));
        }
        self.backpropagated = true;
        if self.nodes[root.0].tracked {
            self.nodes[root.0].grad = Some(vec![1.0]);
        }

        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].tracked {
                continue;
            }
            let Some(upstream) = self.nodes[idx].grad.take() else {
                continue;
            };
            let op = self.nodes[idx].op;
            self.propagate(idx, op, &upstream);
            self.nodes[idx].grad = Some(upstream);
        }
        // Tracked nodes not on any path from the root still get a zero gradient.
        for node in &mut self.nodes {
            if node.tracked && node.grad.is_none() {
                node.grad = Some(vec![0.0; node.value.len()]);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: NodeId, delta: Vec<f64>) {
        let node = &mut self.nodes[id.0];
        if !node.tracked {
            return;
        }
        match &mut node.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(g, d)| *g += d),
            None => node.grad = Some(delta),
        }
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].tracked
    }

    fn propagate(&mut self, idx: usize, op: Op, up: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (p, q) = self.value(a).dims2();
                let r = self.value(b).cols();
                if self.wants(a) {
                    // dA = dC · Bᵀ
                    let bv = self.value(b).values();
                    let mut da = vec![0.0; p * q];
                    for i in 0..p {
                        for k in 0..q {
                            da[i * q + k] = super::tensor::dot(&up[i * r..(i + 1) * r], &bv[k * r..(k + 1) * r]);
                        }
                    }
                    self.accumulate(a, da);
                }
                if self.wants(b) {
                    // dB = Aᵀ · dC
                    let av = self.value(a).values();
                    let mut db = vec![0.0; q * r];
                    for i in 0..p {
                        for k in 0..q {
                            let aik = av[i * q + k];
                            if aik == 0.0 {
                                continue;
                            }
                            for (d, u) in db[k * r..(k + 1) * r].iter_mut().zip(&up[i * r..(i + 1) * r]) {
                                *d += aik * u;
                            }
                        }
                    }
                    self.accumulate(b, db);
                }
            }
            Op::MatMulBt(a, b) => {
                let (p, q) = self.value(a).dims2();
                let r = self.value(b).rows();
                if self.wants(a) {
                    // dA = dC · B
                    let da = matmul_raw(up, self.value(b).values(), p, r, q);
                    self.accumulate(a, da);
                }
                if self.wants(b) {
                    // dB = dCᵀ · A
                    let av = self.value(a).values();
                    let mut db = vec![0.0; r * q];
                    for i in 0..p {
                        let arow = &av[i * q..(i + 1) * q];
                        for j in 0..r {
                            let u = up[i * r + j];
                            if u == 0.0 {
                                continue;
                            }
                            for (d, x) in db[j * q..(j + 1) * q].iter_mut().zip(arow) {
                                *d += u * x;
                            }
                        }
                    }
                    self.accumulate(b, db);
                }
            }
            Op::MatVec(m, s) => {
                let (n, k) = self.value(m).dims2();
                if self.wants(m) {
                    let sv = self.value(s).values();
                    let mut dm = vec![0.0; n * k];
                    for i in 0..n {
                        for j in 0..k {
                            dm[i * k + j] = up[i] * sv[j];
                        }
                    }
                    self.accumulate(m, dm);
                }
                if self.wants(s) {
                    let mv = self.value(m).values();
                    let mut ds = vec![0.0; k];
                    for i in 0..n {
                        for j in 0..k {
                            ds[j] += mv[i * k + j] * up[i];
                        }
                    }
                    self.accumulate(s, ds);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, up.to_vec());
                self.accumulate(b, up.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(a, up.to_vec());
                self.accumulate(b, up.iter().map(|u| -u).collect());
            }
            Op::Mul(a, b) => {
                if self.wants(a) {
                    let d = up.iter().zip(self.value(b).values()).map(|(u, y)| u * y).collect();
                    self.accumulate(a, d);
                }
                if self.wants(b) {
                    let d = up.iter().zip(self.value(a).values()).map(|(u, x)| u * x).collect();
                    self.accumulate(b, d);
                }
            }
            Op::AddRowBias(a, bias) => {
                self.accumulate(a, up.to_vec());
                if self.wants(bias) {
                    let cols = self.value(bias).len();
                    let mut db = vec![0.0; cols];
                    for row in up.chunks(cols) {
                        db.iter_mut().zip(row).for_each(|(d, u)| *d += u);
                    }
                    self.accumulate(bias, db);
                }
            }
            Op::Tanh(a) => {
                let y = self.nodes[idx].value.values();
                let d = up.iter().zip(y).map(|(u, y)| u * (1.0 - y * y)).collect();
                self.accumulate(a, d);
            }
            Op::Exp(a) => {
                let y = self.nodes[idx].value.values();
                let d = up.iter().zip(y).map(|(u, y)| u * y).collect();
                self.accumulate(a, d);
            }
            Op::Scale(a, c) => self.accumulate(a, up.iter().map(|u| c * u).collect()),
            Op::Sum(a) => {
                let n = self.value(a).len();
                self.accumulate(a, vec![up[0]; n]);
            }
            Op::SumSquares(a) => {
                let d = self.value(a).values().iter().map(|x| 2.0 * x * up[0]).collect();
                self.accumulate(a, d);
            }
            Op::RowSoftmax(a) | Op::RowSparsemax(a) => {
                let y = &self.nodes[idx].value;
                let cols = y.cols();
                let mut d = Vec::with_capacity(y.len());
                for (p, g) in y.values().chunks(cols).zip(up.chunks(cols)) {
                    match op {
                        Op::RowSoftmax(_) => d.extend(simplex::softmax_backward(p, g)),
                        _ => d.extend(simplex::sparsemax_backward_from_output(p, g)),
                    }
                }
                self.accumulate(a, d);
            }
            Op::Reshape(a) => self.accumulate(a, up.to_vec()),
            Op::SliceCols(a, start) => {
                let (rows, cols) = self.value(a).dims2();
                let len = self.nodes[idx].value.cols();
                let mut d = vec![0.0; rows * cols];
                for r in 0..rows {
                    d[r * cols + start..r * cols + start + len].copy_from_slice(&up[r * len..(r + 1) * len]);
                }
                self.accumulate(a, d);
            }
        }
    }
}

/// Row-major `p×q · q×r`.
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        let orow = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            if aik == 0.0 {
                continue;
            }
            for (o, bkj) in orow.iter_mut().zip(&b[k * r..(k + 1) * r]) {
                *o += aik * bkj;
            }
        }
    }
    out
}
