use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm_acc, Tensor};
use crate::error::{DgnError, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// `b_scalar` marks a one-element right operand broadcast over `a`.
    Binary {
        op: BinaryOp,
        a: Var,
        b: Var,
        b_scalar: bool,
    },
    Scale(Var, f64),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Swish(Var),
    Concat(Vec<Var>),
    Gather(Var, Arc<[usize]>),
    SegmentSum(Var, Arc<[usize]>),
    Sum(Var),
    RowSqNorm(Var),
    MulCol(Var, Var),
    CrossEntropy {
        logits: Var,
        labels: Arc<[usize]>,
        probs: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation so it can be differentiated in reverse.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and the backward sweep walks it from the end.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Input value that receives a gradient but is not a trainable parameter.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.get(id).clone(), Op::Leaf);
        self.params.push((id, v));
        v
    }

    pub fn elementwise(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let b_scalar = va.shape() != vb.shape() && vb.is_scalar();
        if !b_scalar && va.shape() != vb.shape() {
            return Err(DgnError::shape(op_name(op), va.shape(), vb.shape()));
        }
        let f = |x: f64, y: f64| match op {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
        };
        let data: Vec<f64> = if b_scalar {
            let y = vb.item();
            va.data().iter().map(|&x| f(x, y)).collect()
        } else {
            va.data()
                .iter()
                .zip(vb.data())
                .map(|(&x, &y)| f(x, y))
                .collect()
        };
        let out = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(
            out,
            Op::Binary {
                op,
                a,
                b,
                b_scalar,
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(BinaryOp::Mul, a, b)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rank() != 2 || vb.rank() != 2 || va.shape()[1] != vb.shape()[0] {
            return Err(DgnError::shape("matmul", va.shape(), vb.shape()));
        }
        let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
        let mut out = Tensor::zeros(&[m, n]);
        gemm_acc(m, k, n, va.data(), false, vb.data(), false, out.data_mut());
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a bias row (shape `[n]` or `[1, n]`) to every row of a `[m×n]` value.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(bias));
        if va.rank() != 2 || vb.len() != va.cols() {
            return Err(DgnError::shape("add_row", va.shape(), vb.shape()));
        }
        let n = va.cols();
        let mut out = va.clone();
        if n > 0 {
            for row in out.data_mut().chunks_mut(n) {
                for (x, b) in row.iter_mut().zip(vb.data()) {
                    *x += b;
                }
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    pub fn swish(&mut self, a: Var) -> Var {
        let out = self.value(a).map(swish);
        self.push(out, Op::Swish(a))
    }

    /// Concatenates rank-2 values along the last axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| DgnError::Invalid("concat of zero tensors".into()))?;
        let rows = self.value(*first).rows();
        let mut total = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rank() != 2 || v.rows() != rows {
                return Err(DgnError::shape(
                    "concat",
                    self.value(*first).shape(),
                    v.shape(),
                ));
            }
            total += v.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Selects rows `index[k]` of a rank-2 value into row `k` of the output.
    pub fn gather(&mut self, a: Var, index: Arc<[usize]>) -> Result<Var> {
        let va = self.value(a);
        if va.rank() != 2 {
            return Err(DgnError::shape("gather", va.shape(), &[index.len()]));
        }
        let (rows, cols) = (va.rows(), va.cols());
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in index.iter() {
            if i >= rows {
                return Err(DgnError::Index {
                    what: "gather rows",
                    index: i,
                    len: rows,
                });
            }
            data.extend_from_slice(va.row(i));
        }
        let out = Tensor::new(vec![index.len(), cols], data)?;
        Ok(self.push(out, Op::Gather(a, index)))
    }

    /// Row `s` of the result is the sum of rows whose id is `s`.
    ///
    /// Rows are accumulated in their original order, so the result for each
    /// segment is independent of how other segments are interleaved.
    pub fn segment_sum(&mut self, a: Var, ids: Arc<[usize]>, num_segments: usize) -> Result<Var> {
        let va = self.value(a);
        if va.rank() != 2 || va.rows() != ids.len() {
            return Err(DgnError::shape("segment_sum", va.shape(), &[ids.len()]));
        }
        let out = segment_sum_values(va, &ids, num_segments)?;
        Ok(self.push(out, Op::SegmentSum(a, ids)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Squared Euclidean norm of each row, as an `[m×1]` column.
    pub fn row_sq_norm(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        if va.rank() != 2 {
            return Err(DgnError::shape("row_sq_norm", va.shape(), &[]));
        }
        let data: Vec<f64> = (0..va.rows())
            .map(|r| va.row(r).iter().map(|x| x * x).sum())
            .collect();
        let out = Tensor::new(vec![va.rows(), 1], data)?;
        Ok(self.push(out, Op::RowSqNorm(a)))
    }

    /// Multiplies row `r` of `a` by the scalar `col[r]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (va, vc) = (self.value(a), self.value(col));
        if va.rank() != 2 || vc.len() != va.rows() {
            return Err(DgnError::shape("mul_col", va.shape(), vc.shape()));
        }
        let n = va.cols();
        let mut out = va.clone();
        if n > 0 {
            for (row, s) in out.data_mut().chunks_mut(n).zip(vc.data()) {
                for x in row {
                    *x *= s;
                }
            }
        }
        Ok(self.push(out, Op::MulCol(a, col)))
    }

    /// Mean softmax cross-entropy over rows of `[g×c]` logits.
    pub fn cross_entropy(&mut self, logits: Var, labels: Arc<[usize]>) -> Result<Var> {
        let v = self.value(logits);
        if v.rank() != 2 || v.rows() != labels.len() || v.rows() == 0 {
            return Err(DgnError::shape("cross_entropy", v.shape(), &[labels.len()]));
        }
        let (g, c) = (v.rows(), v.cols());
        let mut probs = Tensor::zeros(&[g, c]);
        let mut total = 0.0;
        for r in 0..g {
            let label = labels[r];
            if label >= c {
                return Err(DgnError::Index {
                    what: "class label",
                    index: label,
                    len: c,
                });
            }
            let row = v.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum_exp: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let log_z = max + sum_exp.ln();
            total += log_z - row[label];
            for (k, &x) in row.iter().enumerate() {
                probs.data_mut()[r * c + k] = (x - log_z).exp();
            }
        }
        let out = Tensor::scalar(total / g as f64);
        Ok(self.push(
            out,
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            },
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(DgnError::Invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::ones(lv.shape()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Binary {
                    op,
                    a,
                    b,
                    b_scalar,
                } => {
                    let va = self.value(*a);
                    let vb = self.value(*b);
                    let (ga, gb) = match op {
                        BinaryOp::Add => (g.clone(), g),
                        BinaryOp::Sub => {
                            let neg = g.map(|x| -x);
                            (g, neg)
                        }
                        BinaryOp::Mul => {
                            let ga = if *b_scalar {
                                let y = vb.item();
                                g.map(|x| x * y)
                            } else {
                                zip_map(&g, vb, |x, y| x * y)
                            };
                            let gb = zip_map(&g, va, |x, y| x * y);
                            (ga, gb)
                        }
                    };
                    let gb = if *b_scalar {
                        let mut s = Tensor::zeros(vb.shape());
                        s.data_mut()[0] = gb.data().iter().sum();
                        s
                    } else {
                        gb
                    };
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accumulate(&mut grads, *a, g.map(|x| x * s));
                }
                Op::MatMul(a, b) => {
                    let va = self.value(*a);
                    let vb = self.value(*b);
                    let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                    let mut ga = Tensor::zeros(&[m, k]);
                    gemm_acc(m, n, k, g.data(), false, vb.data(), true, ga.data_mut());
                    let mut gb = Tensor::zeros(&[k, n]);
                    gemm_acc(k, m, n, va.data(), true, g.data(), false, gb.data_mut());
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(a, bias) => {
                    let vb = self.value(*bias);
                    let n = g.cols();
                    let mut gb = Tensor::zeros(vb.shape());
                    if n > 0 {
                        for row in g.data().chunks(n) {
                            for (acc, x) in gb.data_mut().iter_mut().zip(row) {
                                *acc += x;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *bias, gb);
                }
                Op::Swish(a) => {
                    let ga = zip_map(&g, self.value(*a), |gy, x| gy * swish_grad(x));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Concat(parts) => {
                    let rows = g.rows();
                    let total = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut gp = Tensor::zeros(&[rows, w]);
                        for r in 0..rows {
                            gp.data_mut()[r * w..(r + 1) * w]
                                .copy_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                        }
                        offset += w;
                        accumulate(&mut grads, p, gp);
                    }
                }
                Op::Gather(a, index) => {
                    let rows = self.value(*a).rows();
                    let ga = segment_sum_values(&g, index, rows)?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::SegmentSum(a, ids) => {
                    let cols = g.cols();
                    let mut data = Vec::with_capacity(ids.len() * cols);
                    for &s in ids.iter() {
                        data.extend_from_slice(g.row(s));
                    }
                    let ga = Tensor::new(vec![ids.len(), cols], data)?;
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let gy = g.item();
                    let ga = Tensor::full(self.value(*a).shape(), gy);
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowSqNorm(a) => {
                    let va = self.value(*a);
                    let cols = va.cols();
                    let mut ga = va.clone();
                    if cols > 0 {
                        for (row, gy) in ga.data_mut().chunks_mut(cols).zip(g.data()) {
                            for x in row {
                                *x *= 2.0 * gy;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::MulCol(a, col) => {
                    let va = self.value(*a);
                    let vc = self.value(*col);
                    let cols = va.cols();
                    let mut ga = g.clone();
                    let mut gc = Tensor::zeros(vc.shape());
                    if cols > 0 {
                        for (r, row) in ga.data_mut().chunks_mut(cols).enumerate() {
                            let s = vc.data()[r];
                            let mut dot = 0.0;
                            for (k, x) in row.iter_mut().enumerate() {
                                dot += *x * va.data()[r * cols + k];
                                *x *= s;
                            }
                            gc.data_mut()[r] = dot;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *col, gc);
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    let gy = g.item();
                    let (rows, c) = (probs.rows(), probs.cols());
                    let mut gl = probs.clone();
                    for (r, &label) in labels.iter().enumerate() {
                        gl.data_mut()[r * c + label] -= 1.0;
                    }
                    let f = gy / rows as f64;
                    for x in gl.data_mut() {
                        *x *= f;
                    }
                    accumulate(&mut grads, *logits, gl);
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Gradients of every parameter in `store`; unreached parameters get zeros.
    pub fn param_grads(&self, grads: &Gradients, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape()))
            .collect();
        for &(id, v) in &self.params {
            if let Some(g) = grads.get(v) {
                out[id.index()].add_assign(g);
            }
        }
        out
    }
}

/// Per-node gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf; `None` when the leaf does not reach the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn op_name(op: BinaryOp) -> &'static str {
    match op {
        BinaryOp::Add => "add",
        BinaryOp::Sub => "sub",
        BinaryOp::Mul => "mul",
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip_map of equal shapes")
}

/// Neumaier-compensated per-segment sums, accumulated in original row order.
///
/// Compensation keeps each sum within an ulp or so of the exact value, so
/// reordering the rows changes the result by far less than naive summation.
pub(crate) fn segment_sum_values(values: &Tensor, ids: &[usize], num_segments: usize) -> Result<Tensor> {
    let cols = values.cols();
    let mut out = Tensor::zeros(&[num_segments, cols]);
    let mut comp = vec![0.0; num_segments * cols];
    for (r, &s) in ids.iter().enumerate() {
        if s >= num_segments {
            return Err(DgnError::Index {
                what: "segment id",
                index: s,
                len: num_segments,
            });
        }
        let src = &values.data()[r * cols..(r + 1) * cols];
        let acc = &mut out.data_mut()[s * cols..(s + 1) * cols];
        let c = &mut comp[s * cols..(s + 1) * cols];
        for k in 0..cols {
            let (sum, x) = (acc[k], src[k]);
            let t = sum + x;
            c[k] += if sum.abs() >= x.abs() {
                (sum - t) + x
            } else {
                (x - t) + sum
            };
            acc[k] = t;
        }
    }
    for (a, c) in out.data_mut().iter_mut().zip(&comp) {
        *a += c;
    }
    Ok(out)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `x·σ(x)`.
pub fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn swish_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}
