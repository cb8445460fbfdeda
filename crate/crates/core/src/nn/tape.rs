//! Reverse-mode autodiff over dense matrices.
//!
//! A [`Tape`] records every operation together with its forward value.
//! [`Tape::backward`] walks the record in reverse from a `1 x 1` loss and
//! returns the gradient of every node that the loss depends on.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{ParamGrads, ParamId, ParamStore};
use super::Matrix;
use crate::error::{Error, Result};
use crate::math;

pub const BN_EPS: f64 = 1e-5;

/// Handle to a node of a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Undirected neighbour lists, shared between tapes.
pub type Neighbors = Arc<Vec<Vec<usize>>>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Square(Var),
    NeighborSum(Var, Neighbors),
    MeanRows(Var),
    SumAll(Var),
    MeanAll(Var),
    RepeatRows(Var),
    ConcatCols(Vec<Var>),
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Matrix, inv_std: Vec<f64> },
    BatchNormFixed { x: Var, gamma: Var, beta: Var, xhat: Matrix, inv_std: Vec<f64> },
    MaskedLogSoftmax(Var, Vec<bool>),
    Entropy(Var),
    Pick(Var, usize),
    Min(Var, Var),
    Clamp(Var, f64, f64),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Dimension(format!("{what}: {a:?} vs {b:?}"))
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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// The tensor `id` of `store`, recorded once per tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(Some(v)) = self.param_vars.get(id.0) {
            return *v;
        }
        let v = self.push(store.get(id).clone(), Op::Param);
        if self.param_vars.len() <= id.0 {
            self.param_vars.resize(id.0 + 1, None);
        }
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols != vb.rows {
            return Err(shape_err("matmul", va.shape(), vb.shape()));
        }
        let out = va.matmul(vb);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `x + bias` with a `1 x n` bias broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        if vb.rows != 1 || vb.cols != vx.cols {
            return Err(shape_err("add_row", vx.shape(), vb.shape()));
        }
        let mut out = vx.clone();
        for r in 0..out.rows {
            for (o, b) in out.row_mut(r).iter_mut().zip(&vb.data) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(x, bias)))
    }

    fn zip_same(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(what, va.shape(), vb.shape()));
        }
        let data = va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect();
        let out = Matrix::from_vec(va.rows, va.cols, data);
        Ok(self.push(out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise minimum.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "min", f64::min, Op::Min(a, b))
    }

    /// `x * s` for a `1 x 1` node `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let vs = self.value(s);
        if vs.shape() != (1, 1) {
            return Err(shape_err("mul_scalar", self.value(x).shape(), vs.shape()));
        }
        let k = vs.data[0];
        let out = self.value(x).map(|v| v * k);
        Ok(self.push(out, Op::MulScalar(x, s)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(math::tanh);
        self.push(out, Op::Tanh(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.push(out, Op::Relu(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(math::exp);
        self.push(out, Op::Exp(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        self.push(out, Op::Square(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(x).map(|v| v.clamp(lo, hi));
        self.push(out, Op::Clamp(x, lo, hi))
    }

    /// Row `v` of the result is the sum of rows `neighbors[v]` of `x`.
    pub fn neighbor_sum(&mut self, x: Var, neighbors: &Neighbors) -> Result<Var> {
        let vx = self.value(x);
        if neighbors.len() != vx.rows || neighbors.iter().flatten().any(|&u| u >= vx.rows) {
            return Err(Error::Dimension(format!(
                "neighbor lists for {} nodes applied to {} rows",
                neighbors.len(),
                vx.rows
            )));
        }
        let mut out = Matrix::zeros(vx.rows, vx.cols);
        for (v, list) in neighbors.iter().enumerate() {
            for &u in list {
                for (o, &a) in out.row_mut(v).iter_mut().zip(vx.row(u)) {
                    *o += a;
                }
            }
        }
        Ok(self.push(out, Op::NeighborSum(x, neighbors.clone())))
    }

    /// Column means as a `1 x cols` row.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let vx = self.value(x);
        if vx.rows == 0 {
            return Err(Error::Dimension("mean over zero rows".into()));
        }
        let mut out = vx.column_sums();
        out.scale_assign(1.0 / vx.rows as f64);
        Ok(self.push(out, Op::MeanRows(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Matrix::scalar(s), Op::SumAll(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let vx = self.value(x);
        let s = vx.sum() / vx.data.len().max(1) as f64;
        self.push(Matrix::scalar(s), Op::MeanAll(x))
    }

    /// Tiles a `1 x n` row into `rows x n`.
    pub fn repeat_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let vx = self.value(x);
        if vx.rows != 1 {
            return Err(shape_err("repeat_rows", vx.shape(), (1, vx.cols)));
        }
        let mut data = Vec::with_capacity(rows * vx.cols);
        for _ in 0..rows {
            data.extend_from_slice(&vx.data);
        }
        let out = Matrix::from_vec(rows, vx.cols, data);
        Ok(self.push(out, Op::RepeatRows(x)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows);
        if let Some(&bad) = parts.iter().find(|&&p| self.value(p).rows != rows) {
            return Err(shape_err("concat_cols", (rows, 0), self.value(bad).shape()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.data[r * cols + offset..r * cols + offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    fn check_bn(&self, x: Var, gamma: Var, beta: Var) -> Result<()> {
        let c = self.value(x).cols;
        for p in [gamma, beta] {
            if self.value(p).shape() != (1, c) {
                return Err(shape_err("batch_norm", self.value(x).shape(), self.value(p).shape()));
            }
        }
        Ok(())
    }

    /// Batch normalization with the statistics of the rows of `x`. Returns
    /// the output and the per-column (mean, biased variance).
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        self.check_bn(x, gamma, beta)?;
        let vx = self.value(x);
        if vx.rows == 0 {
            return Err(Error::Dimension("batch norm over zero rows".into()));
        }
        let m = vx.rows as f64;
        let mut mean = vx.column_sums().data;
        for v in &mut mean {
            *v /= m;
        }
        let mut var = vec![0.0; vx.cols];
        for r in 0..vx.rows {
            for ((acc, &x), mu) in var.iter_mut().zip(vx.row(r)).zip(&mean) {
                *acc += (x - mu) * (x - mu);
            }
        }
        for v in &mut var {
            *v /= m;
        }
        let (op_x, out) = self.normalize(x, gamma, beta, &mean, &var);
        let v = self.push(out, Op::BatchNorm { x, gamma, beta, xhat: op_x.0, inv_std: op_x.1 });
        Ok((v, mean, var))
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batch_norm_fixed(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64]) -> Result<Var> {
        self.check_bn(x, gamma, beta)?;
        let c = self.value(x).cols;
        if mean.len() != c || var.len() != c {
            return Err(Error::Dimension("running statistics width".into()));
        }
        let (op_x, out) = self.normalize(x, gamma, beta, mean, var);
        Ok(self.push(out, Op::BatchNormFixed { x, gamma, beta, xhat: op_x.0, inv_std: op_x.1 }))
    }

    fn normalize(&self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64]) -> ((Matrix, Vec<f64>), Matrix) {
        let vx = self.value(x);
        let (g, b) = (&self.value(gamma).data, &self.value(beta).data);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt(v + BN_EPS)).collect();
        let mut xhat = Matrix::zeros(vx.rows, vx.cols);
        let mut out = Matrix::zeros(vx.rows, vx.cols);
        for r in 0..vx.rows {
            for c in 0..vx.cols {
                let h = (vx.get(r, c) - mean[c]) * inv_std[c];
                xhat.set(r, c, h);
                out.set(r, c, g[c] * h + b[c]);
            }
        }
        ((xhat, inv_std), out)
    }

    /// Log-softmax over all entries of `x` restricted to `mask`; masked-out
    /// entries become `-inf` and receive no gradient.
    pub fn masked_log_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let vx = self.value(x);
        if mask.len() != vx.data.len() {
            return Err(Error::Dimension(format!("mask of {} for {} logits", mask.len(), vx.data.len())));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Terminal);
        }
        let max = vx.data.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = vx.data.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| math::exp(v - max)).sum();
        let lse = max + math::ln(sum);
        let out = Matrix::from_vec(
            vx.rows,
            vx.cols,
            vx.data.iter().zip(mask).map(|(&v, &m)| if m { v - lse } else { f64::NEG_INFINITY }).collect(),
        );
        Ok(self.push(out, Op::MaskedLogSoftmax(x, mask.to_vec())))
    }

    /// `-sum p log p` of a log-probability node, skipping `-inf` entries.
    pub fn entropy(&mut self, logp: Var) -> Var {
        let h = -self
            .value(logp)
            .data
            .iter()
            .filter(|v| v.is_finite())
            .map(|&l| math::exp(l) * l)
            .sum::<f64>();
        self.push(Matrix::scalar(h), Op::Entropy(logp))
    }

    /// Entry `index` (row-major) as a `1 x 1` node.
    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var> {
        let vx = self.value(x);
        let value = *vx
            .data
            .get(index)
            .ok_or_else(|| Error::Dimension(format!("pick {index} of {} entries", vx.data.len())))?;
        Ok(self.push(Matrix::scalar(value), Op::Pick(x, index)))
    }

    /// Gradients of the `1 x 1` node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::Usage("backward on a node that was never recorded".into()))?;
        if node.value.shape() != (1, 1) {
            return Err(Error::Usage(format!("backward needs a 1x1 loss, got {:?}", node.value.shape())));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let val = |v: &Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                accumulate(grads, *a, g.matmul_nt(val(b)));
                accumulate(grads, *b, val(a).matmul_tn(g));
            }
            Op::AddRow(x, b) => {
                accumulate(grads, *x, g.clone());
                accumulate(grads, *b, g.column_sums());
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, hadamard(g, val(b)));
                accumulate(grads, *b, hadamard(g, val(a)));
            }
            Op::MulScalar(x, s) => {
                let k = val(s).data[0];
                accumulate(grads, *x, g.map(|v| v * k));
                let ds: f64 = g.data.iter().zip(&val(x).data).map(|(a, b)| a * b).sum();
                accumulate(grads, *s, Matrix::scalar(ds));
            }
            Op::Scale(x, c) => accumulate(grads, *x, g.map(|v| v * c)),
            Op::Tanh(x) => {
                let d = zip_map(g, y, |gv, yv| gv * (1.0 - yv * yv));
                accumulate(grads, *x, d);
            }
            Op::Relu(x) => {
                let d = zip_map(g, val(x), |gv, xv| if xv > 0.0 { gv } else { 0.0 });
                accumulate(grads, *x, d);
            }
            Op::Exp(x) => accumulate(grads, *x, hadamard(g, y)),
            Op::Square(x) => accumulate(grads, *x, zip_map(g, val(x), |gv, xv| 2.0 * gv * xv)),
            Op::Clamp(x, lo, hi) => {
                let d = zip_map(g, val(x), |gv, xv| if xv >= *lo && xv <= *hi { gv } else { 0.0 });
                accumulate(grads, *x, d);
            }
            Op::Min(a, b) => {
                let (va, vb) = (val(a), val(b));
                let da = Matrix::from_vec(
                    g.rows,
                    g.cols,
                    (0..g.data.len()).map(|k| if va.data[k] <= vb.data[k] { g.data[k] } else { 0.0 }).collect(),
                );
                let db = Matrix::from_vec(
                    g.rows,
                    g.cols,
                    (0..g.data.len()).map(|k| if va.data[k] <= vb.data[k] { 0.0 } else { g.data[k] }).collect(),
                );
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::NeighborSum(x, neighbors) => {
                let mut d = Matrix::zeros(g.rows, g.cols);
                for (v, list) in neighbors.iter().enumerate() {
                    for &u in list {
                        for (o, &a) in d.row_mut(u).iter_mut().zip(g.row(v)) {
                            *o += a;
                        }
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::MeanRows(x) => {
                let rows = val(x).rows;
                let mut d = Matrix::zeros(rows, g.cols);
                for r in 0..rows {
                    for (o, &a) in d.row_mut(r).iter_mut().zip(&g.data) {
                        *o = a / rows as f64;
                    }
                }
                accumulate(grads, *x, d);
            }
            Op::SumAll(x) => {
                let vx = val(x);
                accumulate(grads, *x, Matrix::filled(vx.rows, vx.cols, g.data[0]));
            }
            Op::MeanAll(x) => {
                let vx = val(x);
                let n = vx.data.len().max(1) as f64;
                accumulate(grads, *x, Matrix::filled(vx.rows, vx.cols, g.data[0] / n));
            }
            Op::RepeatRows(x) => accumulate(grads, *x, g.column_sums()),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let cols = val(p).cols;
                    let mut d = Matrix::zeros(g.rows, cols);
                    for r in 0..g.rows {
                        d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                    }
                    offset += cols;
                    accumulate(grads, *p, d);
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std } => {
                let gam = &val(gamma).data;
                let (m, c) = (g.rows, g.cols);
                let mut dgamma = Matrix::zeros(1, c);
                let dbeta = g.column_sums();
                let mut sum_dxhat = vec![0.0; c];
                let mut sum_dxhat_xhat = vec![0.0; c];
                for r in 0..m {
                    for j in 0..c {
                        let gv = g.get(r, j);
                        let h = xhat.get(r, j);
                        dgamma.data[j] += gv * h;
                        let dh = gv * gam[j];
                        sum_dxhat[j] += dh;
                        sum_dxhat_xhat[j] += dh * h;
                    }
                }
                let mut dx = Matrix::zeros(m, c);
                let mf = m as f64;
                for r in 0..m {
                    for j in 0..c {
                        let dh = g.get(r, j) * gam[j];
                        let h = xhat.get(r, j);
                        dx.set(r, j, inv_std[j] / mf * (mf * dh - sum_dxhat[j] - h * sum_dxhat_xhat[j]));
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gamma, dgamma);
                accumulate(grads, *beta, dbeta);
            }
            Op::BatchNormFixed { x, gamma, beta, xhat, inv_std } => {
                let gam = &val(gamma).data;
                let mut dx = Matrix::zeros(g.rows, g.cols);
                let mut dgamma = Matrix::zeros(1, g.cols);
                for r in 0..g.rows {
                    for j in 0..g.cols {
                        dx.set(r, j, g.get(r, j) * gam[j] * inv_std[j]);
                        dgamma.data[j] += g.get(r, j) * xhat.get(r, j);
                    }
                }
                accumulate(grads, *x, dx);
                accumulate(grads, *gamma, dgamma);
                accumulate(grads, *beta, g.column_sums());
            }
            Op::MaskedLogSoftmax(x, mask) => {
                let gsum: f64 = g.data.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v).sum();
                let d = Matrix::from_vec(
                    g.rows,
                    g.cols,
                    (0..g.data.len())
                        .map(|k| if mask[k] { g.data[k] - math::exp(y.data[k]) * gsum } else { 0.0 })
                        .collect(),
                );
                accumulate(grads, *x, d);
            }
            Op::Entropy(logp) => {
                let l = val(logp);
                let gv = g.data[0];
                let d = l.map(|v| if v.is_finite() { -gv * math::exp(v) * (v + 1.0) } else { 0.0 });
                accumulate(grads, *logp, d);
            }
            Op::Pick(x, index) => {
                let vx = val(x);
                let mut d = Matrix::zeros(vx.rows, vx.cols);
                d.data[*index] = g.data[0];
                accumulate(grads, *x, d);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, d: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    zip_map(a, b, |x, y| x * y)
}

fn zip_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    Matrix::from_vec(a.rows, a.cols, a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect())
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` when the loss does
    /// not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Adds the gradient of every trainable parameter recorded on `tape`
    /// into `into`.
    pub fn accumulate_params(&self, tape: &Tape, store: &ParamStore, into: &mut ParamGrads) {
        for (index, var) in tape.param_vars.iter().enumerate() {
            let (Some(var), id) = (var, ParamId(index)) else { continue };
            if !store.is_trainable(id) {
                continue;
            }
            if let Some(g) = self.wrt(*var) {
                into.grads[index].add_assign(g);
            }
        }
    }
}
