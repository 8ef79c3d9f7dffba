//! Reverse-mode differentiation over a recorded operation tape.
//!
//! Every node owns (or borrows) its forward value. `backward` walks the tape
//! in reverse and accumulates adjoints; leaves created with [`Tape::param`]
//! can then be read back with [`Gradients::get`].

use std::borrow::Cow;

use super::kernels::{gelu_derivative, gelu_scalar, layer_norm_cached, softmax_in_place, NormCache};
use super::matrix::{matmul_into, matmul_nt_into, matmul_tn_into};
use super::Matrix;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        cache: NormCache,
    },
    Gelu(Var),
    Softmax(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    /// out[i] = table[index[i]], or a zero row for `None`.
    GatherRows {
        table: Var,
        index: Vec<Option<usize>>,
    },
    /// out[i][j] = table[index[i * cols + j]][column]
    GatherScalars {
        table: Var,
        column: usize,
        index: Vec<usize>,
    },
    SelectRow(Var, usize),
    SumSquares(Var),
    /// weight * -sum(target * log_softmax(logits)) for a single-row logits node.
    SoftTargetCe {
        logits: Var,
        target: Vec<f64>,
        weight: f64,
        probs: Vec<f64>,
    },
    Sum(Vec<Var>),
}

struct Node<'a> {
    value: Cow<'a, Matrix>,
    op: Op,
    needs_grad: bool,
}

/// Operation recorder. Leaves may borrow their values for the tape's lifetime.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Matrix>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A differentiable leaf.
    pub fn param(&mut self, value: &'a Matrix) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    pub fn param_owned(&mut self, value: Matrix) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: &'a Matrix) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    pub fn constant_owned(&mut self, value: Matrix) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn derived(&mut self, value: Matrix, op: Op, inputs: &[Var]) -> Var {
        let needs = inputs.iter().any(|&v| self.needs(v));
        self.push(Cow::Owned(value), op, needs)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.derived(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `a * bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(Error::shape(format!(
                "matmul_nt {:?} x {:?}ᵀ",
                av.shape(),
                bv.shape()
            )));
        }
        let mut out = Matrix::zeros(av.rows(), bv.rows());
        matmul_nt_into(av, bv, &mut out);
        Ok(self.derived(out, Op::MatMulNT(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.derived(out, Op::Add(a, b), &[a, b]))
    }

    /// Adds a 1×cols row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(Error::shape(format!(
                "add_row {:?} + {:?}",
                av.shape(),
                rv.shape()
            )));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(rv.data()) {
                *o += b;
            }
        }
        Ok(self.derived(out, Op::AddRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).scale(k);
        self.derived(out, Op::Scale(a, k), &[a])
    }

    /// Layer norm with 1×cols gain and bias nodes.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (out, cache) = layer_norm_cached(
            self.value(x),
            self.value(gain).data(),
            self.value(bias).data(),
            eps,
        )?;
        Ok(self.derived(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                cache,
            },
            &[x, gain, bias],
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(gelu_scalar);
        self.derived(out, Op::Gelu(x), &[x])
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let out = super::kernels::softmax_rows(self.value(x))?;
        Ok(self.derived(out, Op::Softmax(x), &[x]))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + len > xv.cols() {
            return Err(Error::shape(format!(
                "slice_cols {start}+{len} of {} columns",
                xv.cols()
            )));
        }
        let out = Matrix::from_fn(xv.rows(), len, |r, c| xv.get(r, start + c));
        Ok(self.derived(out, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::shape("concat_cols: row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let pv = self.value(p);
                out.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
                offset += pv.cols();
            }
        }
        Ok(self.derived(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != cols) {
            return Err(Error::shape("concat_rows: column counts differ"));
        }
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
            rows += self.value(p).rows();
        }
        let out = Matrix::from_vec(rows, cols, data)?;
        Ok(self.derived(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    pub fn gather_rows(&mut self, table: Var, index: Vec<Option<usize>>) -> Result<Var> {
        let tv = self.value(table);
        if let Some(bad) = index.iter().flatten().find(|&&i| i >= tv.rows()) {
            return Err(Error::shape(format!(
                "gather_rows: row {bad} of {}",
                tv.rows()
            )));
        }
        let mut out = Matrix::zeros(index.len(), tv.cols());
        for (r, i) in index.iter().enumerate() {
            if let Some(i) = i {
                out.row_mut(r).copy_from_slice(tv.row(*i));
            }
        }
        Ok(self.derived(out, Op::GatherRows { table, index }, &[table]))
    }

    /// Builds a `rows × cols` matrix by reading `table[index[k]][column]`.
    pub fn gather_scalars(
        &mut self,
        table: Var,
        column: usize,
        rows: usize,
        cols: usize,
        index: Vec<usize>,
    ) -> Result<Var> {
        let tv = self.value(table);
        if index.len() != rows * cols || column >= tv.cols() {
            return Err(Error::shape("gather_scalars: index/column out of range"));
        }
        if index.iter().any(|&i| i >= tv.rows()) {
            return Err(Error::shape("gather_scalars: row out of range"));
        }
        let data = index.iter().map(|&i| tv.get(i, column)).collect();
        let out = Matrix::from_vec(rows, cols, data)?;
        Ok(self.derived(
            out,
            Op::GatherScalars {
                table,
                column,
                index,
            },
            &[table],
        ))
    }

    pub fn select_row(&mut self, x: Var, row: usize) -> Result<Var> {
        let xv = self.value(x);
        if row >= xv.rows() {
            return Err(Error::shape("select_row out of range"));
        }
        let out = Matrix::row_vector(xv.row(row));
        Ok(self.derived(out, Op::SelectRow(x, row), &[x]))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        self.derived(Matrix::filled(1, 1, s), Op::SumSquares(x), &[x])
    }

    /// Weighted cross-entropy of single-row `logits` against a soft target
    /// distribution, computed through log-sum-exp.
    pub fn soft_target_ce(&mut self, logits: Var, target: &[f64], weight: f64) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rows() != 1 || lv.cols() != target.len() {
            return Err(Error::shape(format!(
                "soft_target_ce: logits {:?}, target {}",
                lv.shape(),
                target.len()
            )));
        }
        let z = lv.data();
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss: f64 = target.iter().zip(z).map(|(t, v)| -t * (v - lse)).sum();
        let mut probs = z.to_vec();
        softmax_in_place(&mut probs);
        let out = Matrix::filled(1, 1, weight * loss);
        Ok(self.derived(
            out,
            Op::SoftTargetCe {
                logits,
                target: target.to_vec(),
                weight,
                probs,
            },
            &[logits],
        ))
    }

    /// Sum of 1×1 scalar nodes.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Result<Var> {
        let mut total = 0.0;
        for &p in parts {
            let v = self.value(p);
            if v.shape() != (1, 1) {
                return Err(Error::shape("sum_scalars expects 1x1 nodes"));
            }
            total += v.get(0, 0);
        }
        Ok(self.derived(Matrix::filled(1, 1, total), Op::Sum(parts.to_vec()), parts))
    }

    /// Reverse sweep from a 1×1 output node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.value(output).shape() != (1, 1) {
            return Err(Error::shape("backward expects a scalar output"));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn zero_like(&self, v: Var) -> Matrix {
        let (r, c) = self.value(v).shape();
        Matrix::zeros(r, c)
    }

    fn propagate(&self, op: &Op, out: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    let mut ga = self.zero_like(*a);
                    matmul_nt_into(g, self.value(*b), &mut ga);
                    self.accumulate(grads, *a, ga);
                }
                if self.needs(*b) {
                    let mut gb = self.zero_like(*b);
                    matmul_tn_into(self.value(*a), g, &mut gb);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::MatMulNT(a, b) => {
                // out = a bᵀ: da = g b, db = gᵀ a
                if self.needs(*a) {
                    let mut ga = self.zero_like(*a);
                    matmul_into(g, self.value(*b), &mut ga);
                    self.accumulate(grads, *a, ga);
                }
                if self.needs(*b) {
                    let mut gb = self.zero_like(*b);
                    matmul_tn_into(g, self.value(*a), &mut gb);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, g.clone());
                if self.needs(*row) {
                    let mut gr = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, v) in gr.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *row, gr);
                }
            }
            Op::Scale(a, k) => self.accumulate(grads, *a, g.scale(*k)),
            Op::LayerNorm {
                x,
                gain,
                bias,
                cache,
            } => {
                let gain_v = self.value(*gain).data();
                let n = g.cols() as f64;
                if self.needs(*x) {
                    let mut gx = self.zero_like(*x);
                    for r in 0..g.rows() {
                        let gr = g.row(r);
                        let xhat = cache.normalized.row(r);
                        let dxhat: Vec<f64> = gr.iter().zip(gain_v).map(|(a, b)| a * b).collect();
                        let mean_d = dxhat.iter().sum::<f64>() / n;
                        let mean_dx =
                            dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n;
                        let is = cache.inv_std[r];
                        for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                            *o = is * (dxhat[c] - mean_d - xhat[c] * mean_dx);
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
                if self.needs(*gain) {
                    let mut gg = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for ((o, a), b) in gg
                            .data_mut()
                            .iter_mut()
                            .zip(g.row(r))
                            .zip(cache.normalized.row(r))
                        {
                            *o += a * b;
                        }
                    }
                    self.accumulate(grads, *gain, gg);
                }
                if self.needs(*bias) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, a) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += a;
                        }
                    }
                    self.accumulate(grads, *bias, gb);
                }
            }
            Op::Gelu(x) => {
                let xv = self.value(*x);
                let mut gx = g.clone();
                for (o, v) in gx.data_mut().iter_mut().zip(xv.data()) {
                    *o *= gelu_derivative(*v);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::Softmax(x) => {
                let s = out;
                let mut gx = Matrix::zeros(s.rows(), s.cols());
                for r in 0..s.rows() {
                    let sr = s.row(r);
                    let gr = g.row(r);
                    let dot: f64 = sr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, o) in gx.row_mut(r).iter_mut().enumerate() {
                        *o = sr[c] * (gr[c] - dot);
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::SliceCols { x, start } => {
                let mut gx = self.zero_like(*x);
                for r in 0..g.rows() {
                    gx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                self.accumulate(grads, *x, gx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.needs(p) {
                        let gp = Matrix::from_fn(g.rows(), w, |r, c| g.get(r, offset + c));
                        self.accumulate(grads, p, gp);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let h = self.value(p).rows();
                    if self.needs(p) {
                        let gp = Matrix::from_fn(h, g.cols(), |r, c| g.get(offset + r, c));
                        self.accumulate(grads, p, gp);
                    }
                    offset += h;
                }
            }
            Op::GatherRows { table, index } => {
                let mut gt = self.zero_like(*table);
                for (r, i) in index.iter().enumerate() {
                    if let Some(i) = i {
                        for (o, v) in gt.row_mut(*i).iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
                self.accumulate(grads, *table, gt);
            }
            Op::GatherScalars {
                table,
                column,
                index,
            } => {
                let mut gt = self.zero_like(*table);
                for (k, &i) in index.iter().enumerate() {
                    let cur = gt.get(i, *column);
                    gt.set(i, *column, cur + g.data()[k]);
                }
                self.accumulate(grads, *table, gt);
            }
            Op::SelectRow(x, row) => {
                let mut gx = self.zero_like(*x);
                gx.row_mut(*row).copy_from_slice(g.data());
                self.accumulate(grads, *x, gx);
            }
            Op::SumSquares(x) => {
                let k = g.get(0, 0) * 2.0;
                self.accumulate(grads, *x, self.value(*x).scale(k));
            }
            Op::SoftTargetCe {
                logits,
                target,
                weight,
                probs,
            } => {
                let mass: f64 = target.iter().sum();
                let k = g.get(0, 0) * weight;
                let data = probs
                    .iter()
                    .zip(target)
                    .map(|(p, t)| k * (mass * p - t))
                    .collect();
                let gl = Matrix::from_vec(1, probs.len(), data).expect("shape");
                self.accumulate(grads, *logits, gl);
            }
            Op::Sum(parts) => {
                for &p in parts {
                    self.accumulate(grads, p, g.clone());
                }
            }
        }
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the output w.r.t. `v`; `None` when `v` does not influence it.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

/// A value paired with its gradient, for callers that want both together.
#[derive(Clone, Debug, PartialEq)]
pub struct DualValue {
    pub value: Matrix,
    pub grad: Matrix,
}

impl DualValue {
    pub fn new(value: Matrix, grad: Matrix) -> Result<Self> {
        if value.shape() != grad.shape() {
            return Err(Error::shape("dual value and gradient shapes differ"));
        }
        Ok(DualValue { value, grad })
    }
}
