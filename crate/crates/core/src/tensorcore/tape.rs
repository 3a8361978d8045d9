//! Reverse-mode gradient tape.
//!
//! Nodes are appended in creation order, so creation order is a valid
//! topological order and [`Tape::backward`] simply walks the node list in
//! reverse.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::kernels;
use super::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T: Scalar> {
    Leaf,
    Const,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddBias(Var, Var),
    Tanh(Var),
    Softmax(Var),
    Sparsemax(Var),
    Transpose(Var),
    Reshape(Var),
    Conv1d { x: Var, filters: Var, width: usize },
    AvgPool(Var),
    Sum(Var),
    Dot(Var, Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Stack(Vec<Var>),
    Row(Var, usize),
    Gather { table: Var, idx: Vec<Option<usize>> },
    Mse(Var, Var),
    CeFirst(Var),
    CeRows { logits: Var, targets: Vec<usize> },
    BceLogit { logit: Var, target: bool },
    SoftArgMax { x: Var, beta: T },
}

#[derive(Debug, Clone)]
struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Records a forward computation for reverse-mode differentiation.
#[derive(Debug, Clone, Default)]
pub struct Tape<T: Scalar = f64> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients<T: Scalar = f64> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient w.r.t. `v`; zeros when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Tensor<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    pub fn get_ref(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Const)
    }

    pub fn scalar_const(&mut self, v: T) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push(y, Op::MatMul(a, b)))
    }

    /// Matrix times vector, `m x n` by `n` giving `m`.
    pub fn matvec(&mut self, a: Var, v: Var) -> Result<Var> {
        let n = self.value(v).len();
        let col = self.reshape(v, &[n, 1])?;
        let y = self.matmul(a, col)?;
        let m = self.value(y).len();
        self.reshape(y, &[m])
    }

    /// Vector times matrix, `n` by `n x m` giving `m`.
    pub fn vecmat(&mut self, v: Var, a: Var) -> Result<Var> {
        let n = self.value(v).len();
        let row = self.reshape(v, &[1, n])?;
        let y = self.matmul(row, a)?;
        let m = self.value(y).len();
        self.reshape(y, &[m])
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{what}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (x, y) = (self.value(a), self.value(b));
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| f(p, q))
            .collect();
        Tensor::raw(x.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let y = self.zip_with(a, b, |p, q| p + q);
        Ok(self.push(y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let y = self.zip_with(a, b, |p, q| p - q);
        Ok(self.push(y, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let y = self.zip_with(a, b, |p, q| p * q);
        Ok(self.push(y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let y = self.value(a).map(|v| v * c);
        self.push(y, Op::Scale(a, c))
    }

    /// Adds vector `bias` to every row of `x` (or to vector `x`).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rank() != 1 || xv.cols() != bv.len() {
            return Err(Error::shape(format!(
                "bias {:?} does not fit {:?}",
                bv.shape(),
                xv.shape()
            )));
        }
        let c = xv.cols();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv.data()[i % c])
            .collect();
        let y = Tensor::raw(xv.shape().to_vec(), data);
        Ok(self.push(y, Op::AddBias(x, bias)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.value(a).map(|v| v.tanh());
        self.push(y, Op::Tanh(a))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let y = kernels::rowwise(self.value(a), kernels::softmax);
        self.push(y, Op::Softmax(a))
    }

    /// Sparsemax over the last axis.
    pub fn sparsemax(&mut self, a: Var) -> Var {
        let y = kernels::rowwise(self.value(a), kernels::sparsemax);
        self.push(y, Op::Sparsemax(a))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        if self.value(a).rank() != 2 {
            return Err(Error::shape("transpose needs a matrix"));
        }
        let y = self.value(a).transpose();
        Ok(self.push(y, Op::Transpose(a)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(a).reshaped(shape)?;
        Ok(self.push(y, Op::Reshape(a)))
    }

    /// Filters are stored as a `(width * d) x F` matrix.
    pub fn conv1d(&mut self, x: Var, filters: Var, width: usize) -> Result<Var> {
        let y = kernels::conv1d(self.value(x), self.value(filters), width)?;
        Ok(self.push(y, Op::Conv1d { x, filters, width }))
    }

    pub fn avg_pool(&mut self, z: Var) -> Result<Var> {
        if self.value(z).rank() != 2 {
            return Err(Error::shape("avg_pool needs an M x d matrix"));
        }
        let y = kernels::avg_pool(self.value(z));
        Ok(self.push(y, Op::AvgPool(z)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).len() != self.value(b).len() {
            return Err(Error::shape(format!(
                "dot: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let s: T = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&p, &q)| p * q)
            .sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b)))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 || start >= end || end > xv.cols() {
            return Err(Error::shape(format!(
                "bad column slice {start}..{end} of {:?}",
                xv.shape()
            )));
        }
        let mut data = Vec::with_capacity(xv.rows() * (end - start));
        for r in 0..xv.rows() {
            data.extend_from_slice(&xv.row(r)[start..end]);
        }
        let y = Tensor::raw(vec![xv.rows(), end - start], data);
        Ok(self.push(y, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if parts
            .iter()
            .any(|&p| self.value(p).rank() != 2 || self.value(p).rows() != rows)
        {
            return Err(Error::shape("concat_cols needs matrices with equal rows"));
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let y = Tensor::raw(vec![rows, total], data);
        Ok(self.push(y, Op::ConcatCols(parts.to_vec())))
    }

    /// Stacks equal-length vectors (or scalars) into rows of a matrix.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("stack of nothing"));
        }
        let n = self.value(parts[0]).len();
        if parts.iter().any(|&p| self.value(p).len() != n) {
            return Err(Error::shape("stack needs equal-length vectors"));
        }
        let mut data = Vec::with_capacity(parts.len() * n);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let y = Tensor::raw(vec![parts.len(), n], data);
        Ok(self.push(y, Op::Stack(parts.to_vec())))
    }

    /// Stacks scalars into a vector.
    pub fn concat_scalars(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.stack(parts)?;
        self.reshape(m, &[parts.len()])
    }

    pub fn row(&mut self, x: Var, r: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.rank() != 2 || r >= xv.rows() {
            return Err(Error::shape(format!("row {r} of {:?}", xv.shape())));
        }
        let y = Tensor::raw(vec![xv.cols()], xv.row(r).to_vec());
        Ok(self.push(y, Op::Row(x, r)))
    }

    /// Row lookup into an embedding matrix; `None` yields a zero row.
    pub fn gather(&mut self, table: Var, idx: &[Option<usize>]) -> Result<Var> {
        let tv = self.value(table);
        if tv.rank() != 2 || idx.is_empty() {
            return Err(Error::shape("gather needs a matrix and >= 1 index"));
        }
        let d = tv.cols();
        let mut data = Vec::with_capacity(idx.len() * d);
        for i in idx {
            match i {
                Some(i) if *i < tv.rows() => data.extend_from_slice(tv.row(*i)),
                Some(i) => return Err(Error::shape(format!("row {i} out of range"))),
                None => data.extend(std::iter::repeat_n(T::zero(), d)),
            }
        }
        let y = Tensor::raw(vec![idx.len(), d], data);
        Ok(self.push(
            y,
            Op::Gather {
                table,
                idx: idx.to_vec(),
            },
        ))
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let v = kernels::mse_matrix(self.value(pred), self.value(target))?;
        Ok(self.push(Tensor::scalar(v), Op::Mse(pred, target)))
    }

    /// Cross-entropy of a logit vector whose target class is index 0.
    pub fn ce_first(&mut self, logits: Var) -> Result<Var> {
        if self.value(logits).rank() != 1 {
            return Err(Error::shape("ce_first needs a logit vector"));
        }
        let v = kernels::ce_first(self.value(logits).data());
        Ok(self.push(Tensor::scalar(v), Op::CeFirst(logits)))
    }

    /// Negative-sampling loss over scalar scores.
    pub fn ce_negsample(&mut self, pos: Var, negs: &[Var]) -> Result<Var> {
        let mut all = Vec::with_capacity(negs.len() + 1);
        all.push(pos);
        all.extend_from_slice(negs);
        let logits = self.concat_scalars(&all)?;
        self.ce_first(logits)
    }

    /// Mean token-level cross-entropy of `M x T` logits against class ids.
    pub fn ce_rows(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rank() != 2 || lv.rows() != targets.len() {
            return Err(Error::shape(format!(
                "ce_rows: logits {:?} vs {} targets",
                lv.shape(),
                targets.len()
            )));
        }
        let t = lv.cols();
        if targets.iter().any(|&c| c >= t) {
            return Err(Error::shape("target class out of range"));
        }
        let total: T = lv
            .data()
            .chunks(t)
            .zip(targets)
            .map(|(r, &c)| kernels::logsumexp(r) - r[c])
            .sum();
        let v = total / T::of_usize(targets.len());
        Ok(self.push(
            Tensor::scalar(v),
            Op::CeRows {
                logits,
                targets: targets.to_vec(),
            },
        ))
    }

    /// Binary cross-entropy of a scalar logit.
    pub fn bce_logit(&mut self, logit: Var, target: bool) -> Result<Var> {
        if self.value(logit).len() != 1 {
            return Err(Error::shape("bce_logit needs a scalar"));
        }
        let z = self.value(logit).item();
        // ln(1 + e^z) - t z, computed stably
        let softplus = z.max(T::zero()) + (-z.abs()).exp().ln_1p();
        let v = if target { softplus - z } else { softplus };
        Ok(self.push(Tensor::scalar(v), Op::BceLogit { logit, target }))
    }

    pub fn softargmax(&mut self, x: Var, beta: T) -> Result<Var> {
        if self.value(x).rank() != 1 {
            return Err(Error::shape("softargmax needs a vector"));
        }
        let v = kernels::softargmax(self.value(x).data(), beta)?;
        Ok(self.push(Tensor::scalar(v), Op::SoftArgMax { x, beta }))
    }

    /// Reverse accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf | Op::Const => {}
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let da = kernels::matmul(&g, &bv.transpose())?;
                    let db = kernels::matmul(&av.transpose(), &g)?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let da = hadamard(&g, self.value(*b));
                    let db = hadamard(&g, self.value(*a));
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, g.map(|v| v * c));
                }
                Op::AddBias(x, bias) => {
                    let c = g.cols();
                    let mut db = vec![T::zero(); c];
                    for r in g.data().chunks(c) {
                        for (o, &v) in db.iter_mut().zip(r) {
                            *o = *o + v;
                        }
                    }
                    accumulate(&mut grads, *x, g.clone());
                    accumulate(&mut grads, *bias, Tensor::raw(vec![c], db));
                }
                Op::Tanh(a) => {
                    let d = hadamard(&g, &node.value.map(|y| T::one() - y * y));
                    accumulate(&mut grads, *a, d);
                }
                Op::Softmax(a) => {
                    let d = kernels::rowwise_vjp(&node.value, &g, kernels::softmax_vjp);
                    accumulate(&mut grads, *a, d);
                }
                Op::Sparsemax(a) => {
                    let d = kernels::rowwise_vjp(&node.value, &g, kernels::sparsemax_vjp);
                    accumulate(&mut grads, *a, d);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Reshape(a) => {
                    let d = g.reshaped(self.shape(*a))?;
                    accumulate(&mut grads, *a, d);
                }
                Op::Conv1d { x, filters, width } => {
                    let (dx, dw) =
                        kernels::conv1d_vjp(self.value(*x), self.value(*filters), *width, &g);
                    accumulate(&mut grads, *x, dx);
                    accumulate(&mut grads, *filters, dw);
                }
                Op::AvgPool(z) => {
                    let zv = self.value(*z);
                    let inv = T::one() / T::of_usize(zv.rows());
                    let row: Vec<T> = g.data().iter().map(|&v| v * inv).collect();
                    let data = row.repeat(zv.rows());
                    accumulate(&mut grads, *z, Tensor::raw(zv.shape().to_vec(), data));
                }
                Op::Sum(a) => {
                    let s = g.item();
                    accumulate(&mut grads, *a, Tensor::full(self.shape(*a), s));
                }
                Op::Dot(a, b) => {
                    let s = g.item();
                    let da = self.value(*b).map(|v| v * s).reshaped(self.shape(*a))?;
                    let db = self.value(*a).map(|v| v * s).reshaped(self.shape(*b))?;
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::SliceCols { x, start } => {
                    let xv = self.value(*x);
                    let mut d = Tensor::zeros(xv.shape());
                    let (c, w) = (xv.cols(), g.cols());
                    for r in 0..xv.rows() {
                        d.data_mut()[r * c + start..r * c + start + w].copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, d);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let w = pv.cols();
                        let mut data = Vec::with_capacity(pv.len());
                        for r in 0..pv.rows() {
                            data.extend_from_slice(&g.row(r)[off..off + w]);
                        }
                        off += w;
                        accumulate(&mut grads, p, Tensor::raw(pv.shape().to_vec(), data));
                    }
                }
                Op::Stack(parts) => {
                    for (r, &p) in parts.iter().enumerate() {
                        let d = Tensor::raw(self.shape(p).to_vec(), g.row(r).to_vec());
                        accumulate(&mut grads, p, d);
                    }
                }
                Op::Row(x, r) => {
                    let xv = self.value(*x);
                    let mut d = Tensor::zeros(xv.shape());
                    let c = xv.cols();
                    d.data_mut()[r * c..(r + 1) * c].copy_from_slice(g.data());
                    accumulate(&mut grads, *x, d);
                }
                Op::Gather { table, idx } => {
                    let tv = self.value(*table);
                    let c = tv.cols();
                    let mut d = Tensor::zeros(tv.shape());
                    for (pos, i) in idx.iter().enumerate() {
                        if let Some(i) = i {
                            let dst = &mut d.data_mut()[i * c..(i + 1) * c];
                            for (o, &v) in dst.iter_mut().zip(g.row(pos)) {
                                *o = *o + v;
                            }
                        }
                    }
                    accumulate(&mut grads, *table, d);
                }
                Op::Mse(p, t) => {
                    let (pv, tv) = (self.value(*p), self.value(*t));
                    let k = g.item() * T::of(2.0) / T::of_usize(pv.len());
                    let data = pv
                        .data()
                        .iter()
                        .zip(tv.data())
                        .map(|(&a, &b)| (a - b) * k)
                        .collect();
                    let dp = Tensor::raw(pv.shape().to_vec(), data);
                    accumulate(&mut grads, *t, dp.map(|v| -v));
                    accumulate(&mut grads, *p, dp);
                }
                Op::CeFirst(l) => {
                    let lv = self.value(*l);
                    let s = g.item();
                    let mut p = kernels::softmax(lv.data());
                    p[0] = p[0] - T::one();
                    let d =
                        Tensor::raw(lv.shape().to_vec(), p.into_iter().map(|v| v * s).collect());
                    accumulate(&mut grads, *l, d);
                }
                Op::CeRows { logits, targets } => {
                    let lv = self.value(*logits);
                    let t = lv.cols();
                    let s = g.item() / T::of_usize(targets.len());
                    let mut data = Vec::with_capacity(lv.len());
                    for (r, &c) in lv.data().chunks(t).zip(targets) {
                        let mut p = kernels::softmax(r);
                        p[c] = p[c] - T::one();
                        data.extend(p.into_iter().map(|v| v * s));
                    }
                    accumulate(&mut grads, *logits, Tensor::raw(lv.shape().to_vec(), data));
                }
                Op::BceLogit { logit, target } => {
                    let z = self.value(*logit).item();
                    let t = if *target { T::one() } else { T::zero() };
                    let d = (kernels::sigmoid(z) - t) * g.item();
                    accumulate(&mut grads, *logit, Tensor::full(self.shape(*logit), d));
                }
                Op::SoftArgMax { x, beta } => {
                    // d/dx_j = beta * p_j * (j - y)
                    let xv = self.value(*x);
                    let beta = *beta;
                    let scaled: Vec<T> = xv.data().iter().map(|&v| v * beta).collect();
                    let p = kernels::softmax(&scaled);
                    let y = node.value.item();
                    let s = g.item();
                    let data = p
                        .iter()
                        .enumerate()
                        .map(|(j, &pj)| beta * pj * (T::of_usize(j) - y) * s)
                        .collect();
                    accumulate(&mut grads, *x, Tensor::raw(xv.shape().to_vec(), data));
                }
            }
            grads[i] = Some(g);
        }

        let shapes = self
            .nodes
            .iter()
            .map(|n| n.value.shape().to_vec())
            .collect();
        // only leaves keep meaningful gradients for callers
        for (i, node) in self.nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads, shapes })
    }
}

fn hadamard<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x * y)
        .collect();
    Tensor::raw(a.shape().to_vec(), data)
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::vector(vec![3.0]).unwrap());
        let y = tape.dot(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).data(), &[6.0]);
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
        let c = tape.constant(Tensor::vector(vec![5.0]).unwrap());
        let loss = tape.sum(c);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap());
        assert!(matches!(tape.backward(x), Err(Error::Shape(_))));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::vector(vec![2.0]).unwrap());
        let y = tape.add(x, x).unwrap();
        let z = tape.mul(y, x).unwrap(); // 2x^2
        let s = tape.sum(z);
        assert_eq!(tape.backward(s).unwrap().get(x).data(), &[8.0]);
    }
}
