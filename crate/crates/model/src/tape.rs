//! Reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records every operation of one forward pass; `backward` then
//! walks it in reverse. Parameters enter the tape once per pass and their
//! gradients are read back with [`Tape::param_grads`].

use std::collections::BTreeMap;

use crate::params::{ParamId, ParamStore};
use crate::tensor::{cst, dot, Matrix, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, S),
    Sigmoid(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix<S>,
        inv_std: Vec<S>,
    },
    GatherRows(Var, Vec<usize>),
    OverwriteRows {
        base: Var,
        src: Var,
        positions: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    MeanRows(Var, Vec<usize>),
    GroupMeanCols(Var, Vec<Vec<usize>>),
    Pick(Var, usize, usize),
    L2NormalizeRows(Var, Vec<S>),
}

struct Node<S> {
    value: Matrix<S>,
    op: Op<S>,
    requires_grad: bool,
}

pub struct Tape<S> {
    nodes: Vec<Node<S>>,
    params: BTreeMap<ParamId, Var>,
    grads: Vec<Option<Matrix<S>>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Tape::new()
    }
}

const LN_EPS: f64 = 1e-12;

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: BTreeMap::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix<S>, op: Op<S>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// A constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Matrix<S>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input whose gradient can be read with [`Tape::grad`].
    pub fn input(&mut self, value: Matrix<S>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// The tape node of a parameter, created on first use.
    pub fn param(&mut self, store: &ParamStore<S>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let requires_grad = store.is_trainable(id);
        self.nodes.push(Node {
            value: store.value(id).clone(),
            op: Op::Leaf,
            requires_grad,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b), &[a, b])
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul_nt(self.value(b));
        self.push(value, Op::MatMulNt(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(value, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(value, Op::Mul(a, b), &[a, b])
    }

    /// Adds a `1×n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows, 1, "add_row expects a row vector");
        assert_eq!(r.cols, self.value(a).cols, "add_row width");
        let mut value = self.value(a).clone();
        let r = self.value(row).data.clone();
        for i in 0..value.rows {
            for (x, &y) in value.row_mut(i).iter_mut().zip(&r) {
                *x += y;
            }
        }
        self.push(value, Op::AddRow(a, row), &[a, row])
    }

    pub fn scale(&mut self, a: Var, s: S) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(value, Op::Scale(a, s), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| gelu(x).0);
        self.push(value, Op::Gelu(a), &[a])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for i in 0..value.rows {
            softmax_in_place(value.row_mut(i));
        }
        self.push(value, Op::SoftmaxRows(a), &[a])
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for i in 0..value.rows {
            let row = value.row_mut(i);
            let lse = log_sum_exp(row);
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        self.push(value, Op::LogSoftmaxRows(a), &[a])
    }

    /// Row-wise layer normalization with learned `1×n` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let n: S = cst(cols as f64);
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = xv.row(i);
            let mean = row.iter().copied().sum::<S>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
            let inv = S::one() / (var + cst(LN_EPS)).sqrt();
            for (h, &v) in xhat.row_mut(i).iter_mut().zip(row) {
                *h = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        let g = &self.value(gamma).data;
        let b = &self.value(beta).data;
        let mut value = xhat.clone();
        for i in 0..rows {
            for (j, v) in value.row_mut(i).iter_mut().enumerate() {
                *v = *v * g[j] + b[j];
            }
        }
        self.push(
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let src = self.value(a);
        let mut value = Matrix::zeros(rows.len(), src.cols);
        for (i, &r) in rows.iter().enumerate() {
            value.row_mut(i).copy_from_slice(src.row(r));
        }
        self.push(value, Op::GatherRows(a, rows.to_vec()), &[a])
    }

    /// `base` with row `positions[i]` replaced by row `i` of `src`.
    pub fn overwrite_rows(&mut self, base: Var, src: Var, positions: &[usize]) -> Var {
        assert_eq!(self.value(src).rows, positions.len(), "overwrite row count");
        let mut value = self.value(base).clone();
        for (i, &p) in positions.iter().enumerate() {
            let row = self.nodes[src.0].value.row(i).to_vec();
            value.row_mut(p).copy_from_slice(&row);
        }
        self.push(
            value,
            Op::OverwriteRows {
                base,
                src,
                positions: positions.to_vec(),
            },
            &[base, src],
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols, cols, "concat_rows width");
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        let value = Matrix::from_vec(rows, cols, data);
        self.push(value, Op::ConcatRows(parts.to_vec()), parts)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut value = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows, rows, "concat_cols height");
            for i in 0..rows {
                value.row_mut(i)[offset..offset + m.cols].copy_from_slice(m.row(i));
            }
            offset += m.cols;
        }
        self.push(value, Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let m = self.value(a);
        let value = Matrix::from_vec(
            end - start,
            m.cols,
            m.data[start * m.cols..end * m.cols].to_vec(),
        );
        self.push(value, Op::SliceRows(a, start), &[a])
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let m = self.value(a);
        let mut value = Matrix::zeros(m.rows, end - start);
        for i in 0..m.rows {
            value.row_mut(i).copy_from_slice(&m.row(i)[start..end]);
        }
        self.push(value, Op::SliceCols(a, start), &[a])
    }

    /// Mean of the selected rows as a `1×n` row.
    pub fn mean_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        assert!(!rows.is_empty(), "mean over no rows");
        let m = self.value(a);
        let mut value = Matrix::zeros(1, m.cols);
        let inv: S = cst(1.0 / rows.len() as f64);
        for &r in rows {
            for (x, &y) in value.data.iter_mut().zip(m.row(r)) {
                *x += y * inv;
            }
        }
        self.push(value, Op::MeanRows(a, rows.to_vec()), &[a])
    }

    /// For a `1×V` row, the mean over each group of column indices: `1×groups`.
    pub fn group_mean_cols(&mut self, a: Var, groups: &[Vec<usize>]) -> Var {
        let m = self.value(a);
        assert_eq!(m.rows, 1, "group_mean_cols expects a row vector");
        let data = groups
            .iter()
            .map(|g| {
                assert!(!g.is_empty(), "empty column group");
                g.iter().map(|&c| m.data[c]).sum::<S>() / cst(g.len() as f64)
            })
            .collect();
        let value = Matrix::row_vector(data);
        self.push(value, Op::GroupMeanCols(a, groups.to_vec()), &[a])
    }

    /// A single element as a `1×1` node.
    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Var {
        let value = Matrix::from_vec(1, 1, vec![self.value(a).get(r, c)]);
        self.push(value, Op::Pick(a, r, c), &[a])
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        let mut norms = Vec::with_capacity(value.rows);
        for i in 0..value.rows {
            let row = value.row_mut(i);
            let norm = dot(row, row).sqrt().max(cst(1e-12));
            for x in row.iter_mut() {
                *x /= norm;
            }
            norms.push(norm);
        }
        self.push(value, Op::L2NormalizeRows(a, norms), &[a])
    }

    /// `-log_softmax(logits)[target]` for a `1×n` row of logits.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let lp = self.log_softmax_rows(logits);
        let picked = self.pick(lp, 0, target);
        self.scale(picked, -S::one())
    }

    /// Fill in gradients of the `1×1` node `loss` with respect to every node.
    pub fn backward(&mut self, loss: Var) {
        assert_eq!(self.shape(loss), (1, 1), "backward from a scalar");
        let mut grads: Vec<Option<Matrix<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, S::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix<S>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients of every trainable parameter used in this pass.
    pub fn param_grads(&self) -> Vec<(ParamId, Matrix<S>)> {
        self.params
            .iter()
            .filter(|(_, v)| self.nodes[v.0].requires_grad)
            .map(|(&id, &v)| {
                let g = self
                    .grad(v)
                    .cloned()
                    .unwrap_or_else(|| Matrix::zeros(self.value(v).rows, self.value(v).cols));
                (id, g)
            })
            .collect()
    }

    fn propagate(&self, i: usize, g: &Matrix<S>, grads: &mut [Option<Matrix<S>>]) {
        let node = &self.nodes[i];
        let needs = |v: &Var| self.nodes[v.0].requires_grad;
        let val = |v: &Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(a) {
                    acc(grads, *a, g.matmul_nt(val(b)));
                }
                if needs(b) {
                    acc(grads, *b, val(a).matmul_tn(g));
                }
            }
            Op::MatMulNt(a, b) => {
                if needs(a) {
                    acc(grads, *a, g.matmul(val(b)));
                }
                if needs(b) {
                    acc(grads, *b, g.matmul_tn(val(a)));
                }
            }
            Op::Add(a, b) => {
                if needs(a) {
                    acc(grads, *a, g.clone());
                }
                if needs(b) {
                    acc(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if needs(a) {
                    acc(grads, *a, g.clone());
                }
                if needs(b) {
                    acc(grads, *b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    acc(grads, *a, g.zip_map(val(b), |x, y| x * y));
                }
                if needs(b) {
                    acc(grads, *b, g.zip_map(val(a), |x, y| x * y));
                }
            }
            Op::AddRow(a, row) => {
                if needs(a) {
                    acc(grads, *a, g.clone());
                }
                if needs(row) {
                    let mut r = Matrix::zeros(1, g.cols);
                    for k in 0..g.rows {
                        for (x, &y) in r.data.iter_mut().zip(g.row(k)) {
                            *x += y;
                        }
                    }
                    acc(grads, *row, r);
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                acc(grads, *a, g.map(|x| x * s));
            }
            Op::Sigmoid(a) => {
                acc(grads, *a, g.zip_map(&node.value, |d, y| d * y * (S::one() - y)));
            }
            Op::Gelu(a) => {
                acc(grads, *a, g.zip_map(val(a), |d, x| d * gelu(x).1));
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut out = Matrix::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let s = dot(g.row(r), y.row(r));
                    for ((o, &d), &p) in out.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = p * (d - s);
                    }
                }
                acc(grads, *a, out);
            }
            Op::LogSoftmaxRows(a) => {
                let y = &node.value;
                let mut out = Matrix::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let s = g.row(r).iter().copied().sum::<S>();
                    for ((o, &d), &lp) in out.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = d - lp.exp() * s;
                    }
                }
                acc(grads, *a, out);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let gam = &val(gamma).data;
                let (rows, cols) = xhat.shape();
                if needs(gamma) || needs(beta) {
                    let mut dg = Matrix::zeros(1, cols);
                    let mut db = Matrix::zeros(1, cols);
                    for r in 0..rows {
                        for j in 0..cols {
                            let d = g.get(r, j);
                            dg.data[j] += d * xhat.get(r, j);
                            db.data[j] += d;
                        }
                    }
                    if needs(gamma) {
                        acc(grads, *gamma, dg);
                    }
                    if needs(beta) {
                        acc(grads, *beta, db);
                    }
                }
                if needs(x) {
                    let n: S = cst(cols as f64);
                    let mut dx = Matrix::zeros(rows, cols);
                    let mut dxhat = vec![S::zero(); cols];
                    for r in 0..rows {
                        for j in 0..cols {
                            dxhat[j] = g.get(r, j) * gam[j];
                        }
                        let sum = dxhat.iter().copied().sum::<S>();
                        let sum_xh = dot(&dxhat, xhat.row(r));
                        let k = inv_std[r] / n;
                        for (j, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = k * (n * dxhat[j] - sum - xhat.get(r, j) * sum_xh);
                        }
                    }
                    acc(grads, *x, dx);
                }
            }
            Op::GatherRows(a, rows) => {
                let src = val(a);
                let mut out = Matrix::zeros(src.rows, src.cols);
                for (k, &r) in rows.iter().enumerate() {
                    for (x, &y) in out.row_mut(r).iter_mut().zip(g.row(k)) {
                        *x += y;
                    }
                }
                acc(grads, *a, out);
            }
            Op::OverwriteRows {
                base,
                src,
                positions,
            } => {
                if needs(base) {
                    let mut gb = g.clone();
                    for &p in positions {
                        gb.row_mut(p).iter_mut().for_each(|x| *x = S::zero());
                    }
                    acc(grads, *base, gb);
                }
                if needs(src) {
                    let mut gs = Matrix::zeros(positions.len(), g.cols);
                    for (k, &p) in positions.iter().enumerate() {
                        gs.row_mut(k).copy_from_slice(g.row(p));
                    }
                    acc(grads, *src, gs);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (r, c) = val(p).shape();
                    if needs(p) {
                        let part = g.data[offset * c..(offset + r) * c].to_vec();
                        acc(grads, *p, Matrix::from_vec(r, c, part));
                    }
                    offset += r;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (r, c) = val(p).shape();
                    if needs(p) {
                        let mut part = Matrix::zeros(r, c);
                        for k in 0..r {
                            part.row_mut(k).copy_from_slice(&g.row(k)[offset..offset + c]);
                        }
                        acc(grads, *p, part);
                    }
                    offset += c;
                }
            }
            Op::SliceRows(a, start) => {
                let src = val(a);
                let mut out = Matrix::zeros(src.rows, src.cols);
                let c = src.cols;
                out.data[start * c..start * c + g.data.len()].copy_from_slice(&g.data);
                acc(grads, *a, out);
            }
            Op::SliceCols(a, start) => {
                let src = val(a);
                let mut out = Matrix::zeros(src.rows, src.cols);
                for k in 0..g.rows {
                    out.row_mut(k)[*start..start + g.cols].copy_from_slice(g.row(k));
                }
                acc(grads, *a, out);
            }
            Op::MeanRows(a, rows) => {
                let src = val(a);
                let mut out = Matrix::zeros(src.rows, src.cols);
                let inv: S = cst(1.0 / rows.len() as f64);
                for &r in rows {
                    for (x, &y) in out.row_mut(r).iter_mut().zip(&g.data) {
                        *x += y * inv;
                    }
                }
                acc(grads, *a, out);
            }
            Op::GroupMeanCols(a, groups) => {
                let src = val(a);
                let mut out = Matrix::zeros(1, src.cols);
                for (k, grp) in groups.iter().enumerate() {
                    let share = g.data[k] / cst(grp.len() as f64);
                    for &c in grp {
                        out.data[c] += share;
                    }
                }
                acc(grads, *a, out);
            }
            Op::Pick(a, r, c) => {
                let src = val(a);
                let mut out = Matrix::zeros(src.rows, src.cols);
                out.set(*r, *c, g.scalar());
                acc(grads, *a, out);
            }
            Op::L2NormalizeRows(a, norms) => {
                let y = &node.value;
                let mut out = Matrix::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let s = dot(g.row(r), y.row(r));
                    for ((o, &d), &yy) in out.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = (d - yy * s) / norms[r];
                    }
                }
                acc(grads, *a, out);
            }
        }
    }
}

fn acc<S: Scalar>(grads: &mut [Option<Matrix<S>>], v: Var, g: Matrix<S>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Tanh-approximated GELU and its derivative.
#[inline]
fn gelu<S: Scalar>(x: S) -> (S, S) {
    let c: S = cst(0.797_884_560_802_865_4);
    let k: S = cst(0.044_715);
    let half: S = cst(0.5);
    let inner = c * (x + k * x * x * x);
    let t = inner.tanh();
    let value = half * x * (S::one() + t);
    let d_inner = c * (S::one() + cst::<S>(3.0) * k * x * x);
    let deriv = half * (S::one() + t) + half * x * (S::one() - t * t) * d_inner;
    (value, deriv)
}

pub fn log_sum_exp<S: Scalar>(xs: &[S]) -> S {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    if max == S::neg_infinity() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<S>().ln()
}

pub fn softmax_in_place<S: Scalar>(xs: &mut [S]) {
    let max = xs.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}
