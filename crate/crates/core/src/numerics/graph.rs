//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation of one forward pass. Values are
//! computed eagerly; [`Graph::backward`] walks the tape in reverse and returns
//! the gradient of a scalar output with respect to every node that requires
//! one. Parameter gradients are then added into a [`ParamStore`] with
//! [`Gradients::accumulate`]; accumulation is additive and the caller resets.

use std::sync::Arc;

use super::kernels::{gemm, softmax_rows_inplace, MatMut, MatRef};
use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Variable,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    AddCol(Var, Var),
    MulCol(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Gather(Var, Arc<[usize]>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Softmax(Var),
    LayerNorm(Var, Vec<f64>),
    Gelu(Var),
    Silu(Var),
    Tanh(Var),
    Sum(Var),
    Mean(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        scale: f64,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recording of one forward computation.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let th = u.tanh();
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
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

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, false)
    }

    /// Leaf whose gradient is reported by [`Gradients::get`].
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Variable, true)
    }

    /// Leaf bound to a stored parameter. Frozen parameters behave as constants.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        if p.trainable {
            self.push(p.tensor.clone(), Op::Param(id), true)
        } else {
            self.push(p.tensor.clone(), Op::Constant, false)
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(name, va.shape(), vb.shape()));
        }
        va.zip_map(vb, f)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "sub", |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "mul", |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        let ng = self.ng(a);
        self.push(out, Op::Scale(a, s), ng)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|v| v + s);
        let ng = self.ng(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    fn check_row(&self, x: Var, r: Var, name: &'static str) -> Result<()> {
        let (vx, vr) = (self.value(x), self.value(r));
        if vr.len() != vx.cols() {
            return Err(Error::shape(name, vx.shape(), vr.shape()));
        }
        Ok(())
    }

    fn check_col(&self, x: Var, c: Var, name: &'static str) -> Result<()> {
        let (vx, vc) = (self.value(x), self.value(c));
        if vc.len() != vx.rows() {
            return Err(Error::shape(name, vx.shape(), vc.shape()));
        }
        Ok(())
    }

    /// Adds the vector `r` (length `cols`) to every row of `x`.
    pub fn add_row(&mut self, x: Var, r: Var) -> Result<Var> {
        self.check_row(x, r, "add_row")?;
        let c = self.value(x).cols();
        let mut out = self.value(x).clone();
        let rv = self.value(r).data().to_vec();
        for row in out.data_mut().chunks_mut(c) {
            row.iter_mut().zip(&rv).for_each(|(a, b)| *a += b);
        }
        let ng = self.ng(x) || self.ng(r);
        Ok(self.push(out, Op::AddRow(x, r), ng))
    }

    /// Multiplies every row of `x` elementwise by the vector `r`.
    pub fn mul_row(&mut self, x: Var, r: Var) -> Result<Var> {
        self.check_row(x, r, "mul_row")?;
        let c = self.value(x).cols();
        let mut out = self.value(x).clone();
        let rv = self.value(r).data().to_vec();
        for row in out.data_mut().chunks_mut(c) {
            row.iter_mut().zip(&rv).for_each(|(a, b)| *a *= b);
        }
        let ng = self.ng(x) || self.ng(r);
        Ok(self.push(out, Op::MulRow(x, r), ng))
    }

    /// Adds `c[i]` to every element of row `i`.
    pub fn add_col(&mut self, x: Var, c: Var) -> Result<Var> {
        self.check_col(x, c, "add_col")?;
        let cols = self.value(x).cols();
        let mut out = self.value(x).clone();
        let cv = self.value(c).data().to_vec();
        for (row, b) in out.data_mut().chunks_mut(cols).zip(&cv) {
            row.iter_mut().for_each(|a| *a += b);
        }
        let ng = self.ng(x) || self.ng(c);
        Ok(self.push(out, Op::AddCol(x, c), ng))
    }

    /// Scales row `i` of `x` by `c[i]`.
    pub fn mul_col(&mut self, x: Var, c: Var) -> Result<Var> {
        self.check_col(x, c, "mul_col")?;
        let cols = self.value(x).cols();
        let mut out = self.value(x).clone();
        let cv = self.value(c).data().to_vec();
        for (row, b) in out.data_mut().chunks_mut(cols).zip(&cv) {
            row.iter_mut().for_each(|a| *a *= b);
        }
        let ng = self.ng(x) || self.ng(c);
        Ok(self.push(out, Op::MulCol(x, c), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).transpose()?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Transpose(a), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        let ng = self.ng(a);
        Ok(self.push(out, Op::Reshape(a), ng))
    }

    /// `out.data[i] = x.data[index[i]]`, reshaped to `shape`.
    pub fn gather(&mut self, x: Var, index: Arc<[usize]>, shape: &[usize]) -> Result<Var> {
        let src = self.value(x).data();
        let n: usize = shape.iter().product();
        if n != index.len() {
            return Err(Error::shape("gather", shape, &[index.len()]));
        }
        let mut data = Vec::with_capacity(n);
        for &i in index.iter() {
            let v = *src
                .get(i)
                .ok_or_else(|| Error::invalid(format!("gather index {i} out of range {}", src.len())))?;
            data.push(v);
        }
        let out = Tensor::new(shape.to_vec(), data)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::Gather(x, index), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::concat_rows(&refs)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows());
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(Error::shape("concat_cols", &[rows], v.shape()));
            }
            widths.push(v.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let v = self.value(p).data();
            for i in 0..rows {
                data[i * total + off..i * total + off + w].copy_from_slice(&v[i * w..(i + 1) * w]);
            }
            off += w;
        }
        let out = Tensor::new(vec![rows, total], data)?;
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(x).slice_rows(start, len)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::SliceRows(x, start), ng))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let v = self.value(x);
        let (rows, cols) = (v.rows(), v.cols());
        if start + width > cols {
            return Err(Error::shape("slice_cols", v.shape(), &[start, width]));
        }
        let mut data = Vec::with_capacity(rows * width);
        for i in 0..rows {
            data.extend_from_slice(&v.data()[i * cols + start..i * cols + start + width]);
        }
        let out = Tensor::new(vec![rows, width], data)?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::SliceCols(x, start), ng))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).softmax_rows()?;
        let ng = self.ng(x);
        Ok(self.push(out, Op::Softmax(x), ng))
    }

    /// Per-row standardization without affine terms.
    pub fn layer_norm(&mut self, x: Var, eps: f64) -> Result<Var> {
        let v = self.value(x);
        let c = v.cols();
        if c == 0 {
            return Err(Error::invalid("layer_norm over an empty last axis"));
        }
        let mut out = v.clone();
        let mut rstds = Vec::with_capacity(v.rows());
        for row in out.data_mut().chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / c as f64;
            let rstd = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|a| *a = (*a - mean) * rstd);
            rstds.push(rstd);
        }
        let ng = self.ng(x);
        Ok(self.push(out, Op::LayerNorm(x, rstds), ng))
    }

    /// Layer norm with learned gain and bias.
    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let n = self.layer_norm(x, eps)?;
        let s = self.mul_row(n, gain)?;
        self.add_row(s, bias)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(gelu);
        let ng = self.ng(x);
        self.push(out, Op::Gelu(x), ng)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * sigmoid(v));
        let ng = self.ng(x);
        self.push(out, Op::Silu(x), ng)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        let ng = self.ng(x);
        self.push(out, Op::Tanh(x), ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let ng = self.ng(x);
        self.push(out, Op::Sum(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).mean());
        let ng = self.ng(x);
        self.push(out, Op::Mean(x), ng)
    }

    /// `x @ w + b` with `b` broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let y = self.matmul(x, w)?;
        match b {
            Some(b) => self.add_row(y, b),
            None => Ok(y),
        }
    }

    /// Multi-head scaled dot-product attention.
    ///
    /// `q: [N, D]`, `k: [M, D]`, `v: [M, Dv]`; both `D` and `Dv` are split into
    /// `heads` equal column blocks. Returns `[N, Dv]` with head outputs laid out
    /// side by side.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, scale: f64) -> Result<Var> {
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        if vq.rank() != 2 || vk.rank() != 2 || vv.rank() != 2 {
            return Err(Error::shape("attention", vq.shape(), vk.shape()));
        }
        let (n, d) = (vq.rows(), vq.cols());
        let m = vk.rows();
        let dv = vv.cols();
        if vk.cols() != d || vv.rows() != m {
            return Err(Error::shape("attention", vk.shape(), vv.shape()));
        }
        if heads == 0 || d % heads != 0 || dv % heads != 0 {
            return Err(Error::invalid(format!("{heads} heads do not divide dims {d}/{dv}")));
        }
        if m == 0 {
            return Err(Error::invalid("attention over an empty key set"));
        }
        let (cq, cv) = (d / heads, dv / heads);
        let mut probs = vec![0.0; heads * n * m];
        let mut out = Tensor::zeros(&[n, dv]);
        for (h, p) in probs.chunks_mut(n * m).enumerate() {
            gemm(
                scale,
                vq.mat().cols_range(h * cq, cq),
                vk.mat().cols_range(h * cq, cq).t(),
                0.0,
                MatMut::new(p, n, m),
            );
            softmax_rows_inplace(p, m);
            gemm(
                1.0,
                MatRef::new(p, n, m),
                vv.mat().cols_range(h * cv, cv),
                0.0,
                out.mat_mut().cols_range(h * cv, cv),
            );
        }
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                scale,
                probs,
            },
            ng,
        ))
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.len() != 1 {
            return Err(Error::shape("backward", out.shape(), &[]));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::full(out.shape(), 1.0));
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let g = match &node.op {
                Op::Constant | Op::Variable | Op::Param(_) => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backprop_node(node, &g, &mut grads)?;
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.ng(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn backprop_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Constant | Op::Variable | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    let mut da = Tensor::zeros(va.shape());
                    gemm(1.0, g.mat(), vb.mat().t(), 0.0, da.mat_mut());
                    self.acc(grads, *a, da);
                }
                if self.ng(*b) {
                    let mut db = Tensor::zeros(vb.shape());
                    gemm(1.0, va.mat().t(), g.mat(), 0.0, db.mat_mut());
                    self.acc(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.clone());
                self.acc(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.ng(*a) {
                    self.acc(grads, *a, g.zip_map(self.value(*b), |x, y| x * y)?);
                }
                if self.ng(*b) {
                    self.acc(grads, *b, g.zip_map(self.value(*a), |x, y| x * y)?);
                }
            }
            Op::Scale(a, s) => self.acc(grads, *a, g.scale(*s)),
            Op::AddScalar(a) => self.acc(grads, *a, g.clone()),
            Op::AddRow(x, r) => {
                self.acc(grads, *x, g.clone());
                if self.ng(*r) {
                    let c = g.cols();
                    let mut dr = vec![0.0; c];
                    for row in g.data().chunks(c) {
                        dr.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    let shape = self.value(*r).shape().to_vec();
                    self.acc(grads, *r, Tensor::new(shape, dr)?);
                }
            }
            Op::MulRow(x, r) => {
                let c = g.cols();
                let rv = self.value(*r);
                if self.ng(*x) {
                    let mut dx = g.clone();
                    for row in dx.data_mut().chunks_mut(c) {
                        row.iter_mut().zip(rv.data()).for_each(|(a, b)| *a *= b);
                    }
                    self.acc(grads, *x, dx);
                }
                if self.ng(*r) {
                    let xv = self.value(*x);
                    let mut dr = vec![0.0; c];
                    for (grow, xrow) in g.data().chunks(c).zip(xv.data().chunks(c)) {
                        for j in 0..c {
                            dr[j] += grow[j] * xrow[j];
                        }
                    }
                    self.acc(grads, *r, Tensor::new(rv.shape().to_vec(), dr)?);
                }
            }
            Op::AddCol(x, cvar) => {
                self.acc(grads, *x, g.clone());
                if self.ng(*cvar) {
                    let c = g.cols();
                    let dc: Vec<f64> = g.data().chunks(c).map(|r| r.iter().sum()).collect();
                    let shape = self.value(*cvar).shape().to_vec();
                    self.acc(grads, *cvar, Tensor::new(shape, dc)?);
                }
            }
            Op::MulCol(x, cvar) => {
                let c = g.cols();
                let cv = self.value(*cvar);
                if self.ng(*x) {
                    let mut dx = g.clone();
                    for (row, s) in dx.data_mut().chunks_mut(c).zip(cv.data()) {
                        row.iter_mut().for_each(|a| *a *= s);
                    }
                    self.acc(grads, *x, dx);
                }
                if self.ng(*cvar) {
                    let xv = self.value(*x);
                    let dc: Vec<f64> = g
                        .data()
                        .chunks(c)
                        .zip(xv.data().chunks(c))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(a, b)| a * b).sum())
                        .collect();
                    self.acc(grads, *cvar, Tensor::new(cv.shape().to_vec(), dc)?);
                }
            }
            Op::Transpose(a) => self.acc(grads, *a, g.transpose()?),
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                self.acc(grads, *a, g.clone().reshape(&shape)?);
            }
            Op::Gather(x, index) => {
                if self.ng(*x) {
                    let mut dx = Tensor::zeros(self.value(*x).shape());
                    let d = dx.data_mut();
                    for (&i, &gv) in index.iter().zip(g.data()) {
                        d[i] += gv;
                    }
                    self.acc(grads, *x, dx);
                }
            }
            Op::ConcatRows(parts) => {
                let c = g.cols();
                let mut off = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let n = pv.len();
                    if self.ng(p) {
                        let part = Tensor::new(pv.shape().to_vec(), g.data()[off..off + n].to_vec())?;
                        self.acc(grads, p, part);
                    }
                    off += pv.rows() * c;
                }
            }
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let total = g.cols();
                let mut off = 0;
                for &p in parts {
                    let pv = self.value(p);
                    let w = pv.cols();
                    if self.ng(p) {
                        let mut data = Vec::with_capacity(rows * w);
                        for i in 0..rows {
                            data.extend_from_slice(&g.data()[i * total + off..i * total + off + w]);
                        }
                        self.acc(grads, p, Tensor::new(pv.shape().to_vec(), data)?);
                    }
                    off += w;
                }
            }
            Op::SliceRows(x, start) => {
                if self.ng(*x) {
                    let xv = self.value(*x);
                    let c = xv.cols();
                    let mut dx = Tensor::zeros(xv.shape());
                    dx.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    self.acc(grads, *x, dx);
                }
            }
            Op::SliceCols(x, start) => {
                if self.ng(*x) {
                    let xv = self.value(*x);
                    let (rows, cols, w) = (xv.rows(), xv.cols(), g.cols());
                    let mut dx = Tensor::zeros(xv.shape());
                    for i in 0..rows {
                        dx.data_mut()[i * cols + start..i * cols + start + w]
                            .copy_from_slice(&g.data()[i * w..(i + 1) * w]);
                    }
                    self.acc(grads, *x, dx);
                }
            }
            Op::Softmax(x) => {
                let c = y.cols();
                let mut dx = g.clone();
                for (drow, prow) in dx.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
                    let dot: f64 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
                    drow.iter_mut().zip(prow).for_each(|(d, p)| *d = p * (*d - dot));
                }
                self.acc(grads, *x, dx);
            }
            Op::LayerNorm(x, rstds) => {
                let c = y.cols();
                let mut dx = g.clone();
                for ((drow, yrow), rstd) in dx.data_mut().chunks_mut(c).zip(y.data().chunks(c)).zip(rstds) {
                    let mg = drow.iter().sum::<f64>() / c as f64;
                    let mgy = drow.iter().zip(yrow).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    drow.iter_mut()
                        .zip(yrow)
                        .for_each(|(d, yv)| *d = rstd * (*d - mg - yv * mgy));
                }
                self.acc(grads, *x, dx);
            }
            Op::Gelu(x) => {
                let dx = g.zip_map(self.value(*x), |gv, xv| gv * gelu_grad(xv))?;
                self.acc(grads, *x, dx);
            }
            Op::Silu(x) => {
                let dx = g.zip_map(self.value(*x), |gv, xv| {
                    let s = sigmoid(xv);
                    gv * s * (1.0 + xv * (1.0 - s))
                })?;
                self.acc(grads, *x, dx);
            }
            Op::Tanh(x) => {
                let dx = g.zip_map(y, |gv, yv| gv * (1.0 - yv * yv))?;
                self.acc(grads, *x, dx);
            }
            Op::Sum(x) => {
                let gv = g.item();
                self.acc(grads, *x, Tensor::full(self.value(*x).shape(), gv));
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let gv = g.item() / xv.len() as f64;
                self.acc(grads, *x, Tensor::full(xv.shape(), gv));
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                scale,
                probs,
            } => {
                let (vq, vk, vv) = (self.value(*q), self.value(*k), self.value(*v));
                let (n, d, m, dv) = (vq.rows(), vq.cols(), vk.rows(), vv.cols());
                let (cq, cv) = (d / heads, dv / heads);
                let mut dq = Tensor::zeros(vq.shape());
                let mut dk = Tensor::zeros(vk.shape());
                let mut dvv = Tensor::zeros(vv.shape());
                let mut dp = vec![0.0; n * m];
                for (h, p) in probs.chunks(n * m).enumerate() {
                    let gh = g.mat().cols_range(h * cv, cv);
                    gemm(1.0, gh, vv.mat().cols_range(h * cv, cv).t(), 0.0, MatMut::new(&mut dp, n, m));
                    gemm(
                        1.0,
                        MatRef::new(p, n, m).t(),
                        gh,
                        1.0,
                        dvv.mat_mut().cols_range(h * cv, cv),
                    );
                    for (drow, prow) in dp.chunks_mut(m).zip(p.chunks(m)) {
                        let dot: f64 = drow.iter().zip(prow).map(|(a, b)| a * b).sum();
                        drow.iter_mut().zip(prow).for_each(|(dd, pv)| *dd = pv * (*dd - dot));
                    }
                    gemm(
                        *scale,
                        MatRef::new(&dp, n, m),
                        vk.mat().cols_range(h * cq, cq),
                        1.0,
                        dq.mat_mut().cols_range(h * cq, cq),
                    );
                    gemm(
                        *scale,
                        MatRef::new(&dp, n, m).t(),
                        vq.mat().cols_range(h * cq, cq),
                        1.0,
                        dk.mat_mut().cols_range(h * cq, cq),
                    );
                }
                self.acc(grads, *q, dq);
                self.acc(grads, *k, dk);
                self.acc(grads, *v, dvv);
            }
        }
        Ok(())
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf created with [`Graph::variable`] or [`Graph::param`].
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Adds parameter gradients into the store's gradient buffers.
    pub fn accumulate(&self, graph: &Graph, store: &mut ParamStore) {
        for (node, g) in graph.nodes.iter().zip(&self.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, g) {
                let p = store.get_mut(*id);
                for (a, b) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
        }
    }
}
