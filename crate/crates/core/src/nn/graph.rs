//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation of one forward pass. Nodes that do
//! not depend on a trainable parameter (or on an input created with
//! [`Graph::input_with_grad`]) are never differentiated, so frozen towers
//! cost nothing in the backward pass and receive exactly zero gradient.

use std::collections::BTreeMap;

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use crate::error::{shape_err, Error, Result};
use crate::resample;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Gelu(Var),
    Sigmoid(Var),
    SoftmaxRows(Var),
    LayerNormRows(Var),
    L2NormalizeRows(Var),
    Transpose(Var),
    Reshape(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    MeanRows(Var),
    Sum(Var),
    Conv3x3 {
        x: Var,
        w: Var,
        b: Var,
        cols: Vec<f64>,
    },
    Resize(Var),
    Patchify {
        x: Var,
        patch: usize,
    },
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Parameter gradients keyed by id. Missing entries are exactly zero.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    map: BTreeMap<ParamId, Tensor>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.map.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.map.iter().map(|(k, v)| (*k, v))
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (id, g) in &other.map {
            match self.map.get_mut(id) {
                Some(acc) => acc.add_assign(g),
                None => {
                    self.map.insert(*id, g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.map.values_mut() {
            g.scale(s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.map
            .values()
            .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

fn dims2(t: &Tensor) -> Result<(usize, usize)> {
    t.dims2()
}

/// Rows = first extent, columns = everything else.
fn row_view(t: &Tensor) -> (usize, usize) {
    let r = t.shape()[0];
    (r, t.len() / r.max(1))
}

fn gelu(x: f64) -> (f64, f64) {
    const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let y = 0.5 * x * (1.0 + t);
    let dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * C * (1.0 + 3.0 * 0.044715 * x * x);
    (y, dy)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// im2col for a 3x3 kernel with zero padding: `[c*9, h*w]`.
fn im2col3(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut cols = vec![0.0; c * 9 * hw];
    for ch in 0..c {
        let plane = &x[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            row[y * w + xx] = plane[sy as usize * w + sx as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im3(cols: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut x = vec![0.0; c * hw];
    for ch in 0..c {
        let plane = &mut x[ch * hw..(ch + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ch * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            plane[sy as usize * w + sx as usize] += row[y * w + xx];
                        }
                    }
                }
            }
        }
    }
    x
}

/// Index map of the patchify permutation: output position -> input position.
fn patchify_index(c: usize, h: usize, w: usize, p: usize) -> Vec<usize> {
    let (gh, gw) = (h / p, w / p);
    let mut idx = Vec::with_capacity(c * h * w);
    for gy in 0..gh {
        for gx in 0..gw {
            for ch in 0..c {
                for py in 0..p {
                    for px in 0..p {
                        idx.push(ch * h * w + (gy * p + py) * w + gx * p + px);
                    }
                }
            }
        }
    }
    idx
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

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Constant input.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input whose gradient is wanted (see [`Graph::grad`]).
    pub fn input_with_grad(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Leaf holding a copy of a parameter; differentiated iff trainable.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.tensor.clone(), Op::Param(id), p.trainable)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self.value(a))?;
        let (k2, n) = dims2(self.value(b))?;
        if k != k2 {
            return Err(shape_err!("matmul {m}x{k} by {k2}x{n}"));
        }
        let out = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2(self.value(a))?;
        let (n, k2) = dims2(self.value(b))?;
        if k != k2 {
            return Err(shape_err!("matmul_nt {m}x{k} by ({n}x{k2})^T"));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k, 1),
            self.value(b).data(),
            (1, k),
            &mut out,
            false,
        );
        let ng = self.needs(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMulNT(a, b), ng))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err!(
                "elementwise op on {:?} and {:?}",
                ta.shape(),
                tb.shape()
            ));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let out = Tensor::new(ta.shape(), data)?;
        let ng = self.needs(&[a, b]);
        Ok(self.push(out, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, |x, y| x / y, Op::Div(a, b))
    }

    fn row_broadcast(
        &mut self,
        x: Var,
        r: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(r));
        let (_, n) = row_view(tx);
        if tr.len() != n {
            return Err(shape_err!(
                "row broadcast of {:?} onto {:?}",
                tr.shape(),
                tx.shape()
            ));
        }
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| f(*v, tr.data()[i % n]))
            .collect();
        let out = Tensor::new(tx.shape(), data)?;
        let ng = self.needs(&[x, r]);
        Ok(self.push(out, op, ng))
    }

    /// `x[i, j] + b[j]`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        self.row_broadcast(x, b, |v, r| v + r, Op::AddRow(x, b))
    }

    /// `x[i, j] * g[j]`.
    pub fn mul_row(&mut self, x: Var, g: Var) -> Result<Var> {
        self.row_broadcast(x, g, |v, r| v * r, Op::MulRow(x, g))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(x);
        let out = Tensor::new(t.shape(), t.data().iter().map(|v| f(*v)).collect()).unwrap();
        let ng = self.needs(&[x]);
        self.push(out, op, ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.map(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |v| v + c, Op::AddScalar(x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.map(x, |v| gelu(v).0, Op::Gelu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    /// Softmax over the last axis of a matrix.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = dims2(self.value(x))?;
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(c) {
            softmax_in_place(row);
        }
        let ng = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::SoftmaxRows(x), ng))
    }

    /// Per-row standardization without affine terms.
    pub fn layer_norm_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = dims2(self.value(x))?;
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv;
            }
        }
        let ng = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::LayerNormRows(x), ng))
    }

    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = dims2(self.value(x))?;
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(c) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                return Err(Error::Contract("cannot normalize a zero row".into()));
            }
            for v in row.iter_mut() {
                *v /= n;
            }
        }
        let ng = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::L2NormalizeRows(x), ng))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose()?;
        let ng = self.needs(&[x]);
        Ok(self.push(out, Op::Transpose(x), ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshaped(shape)?;
        let ng = self.needs(&[x]);
        Ok(self.push(out, Op::Reshape(x), ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let (r, c) = dims2(self.value(p))?;
            if r != rows {
                return Err(shape_err!("concat_cols row mismatch {r} vs {rows}"));
            }
            total += c;
        }
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let ng = self.needs(parts);
        Ok(self.push(
            Tensor::matrix(rows, total, data)?,
            Op::ConcatCols(parts.to_vec()),
            ng,
        ))
    }

    /// Concatenate along the first axis; trailing extents must agree.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let tail = self.value(parts[0]).shape()[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape()[1..] != tail[..] {
                return Err(shape_err!(
                    "concat_rows trailing shape {:?} vs {:?}",
                    &t.shape()[1..],
                    tail
                ));
            }
            rows += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![rows];
        shape.extend_from_slice(&tail);
        let ng = self.needs(parts);
        Ok(self.push(
            Tensor::new(&shape, data)?,
            Op::ConcatRows(parts.to_vec()),
            ng,
        ))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = dims2(self.value(x))?;
        if start + len > r {
            return Err(shape_err!("slice rows {start}..{} of {r}", start + len));
        }
        let data = self.value(x).data()[start * c..(start + len) * c].to_vec();
        let ng = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(len, c, data)?, Op::SliceRows(x, start), ng))
    }

    /// Embedding lookup: rows `idx` of `table`.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = dims2(self.value(table))?;
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(shape_err!("row index {i} out of {r}"));
            }
            data.extend_from_slice(self.value(table).row(i));
        }
        let ng = self.needs(&[table]);
        Ok(self.push(
            Tensor::matrix(idx.len(), c, data)?,
            Op::GatherRows(table, idx.to_vec()),
            ng,
        ))
    }

    /// Column means: `[m, n] -> [1, n]`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (r, c) = dims2(self.value(x))?;
        let mut out = vec![0.0; c];
        for row in self.value(x).data().chunks(c) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= r as f64;
        }
        let ng = self.needs(&[x]);
        Ok(self.push(Tensor::matrix(1, c, out)?, Op::MeanRows(x), ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let ng = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// Arithmetic mean of equally shaped tensors.
    pub fn mean_of(&mut self, parts: &[Var]) -> Result<Var> {
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = self.add(acc, p)?;
        }
        Ok(self.scale(acc, 1.0 / parts.len() as f64))
    }

    /// 3x3, stride 1, zero-padded convolution. `x: [c, h, w]`,
    /// `w: [o, c*9]`, `b: [o]` -> `[o, h, w]`.
    pub fn conv3x3(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (c, h, wd) = match self.value(x).shape()[..] {
            [c, h, w] => (c, h, w),
            ref s => return Err(shape_err!("conv input must be [c,h,w], got {s:?}")),
        };
        let (o, k) = dims2(self.value(w))?;
        if k != c * 9 || self.value(b).len() != o {
            return Err(shape_err!(
                "conv weight {o}x{k} / bias {} for {c} input channels",
                self.value(b).len()
            ));
        }
        let hw = h * wd;
        let cols = im2col3(self.value(x).data(), c, h, wd);
        let mut out = vec![0.0; o * hw];
        for (oc, bias) in self.value(b).data().iter().enumerate() {
            out[oc * hw..(oc + 1) * hw].fill(*bias);
        }
        gemm(
            o,
            k,
            hw,
            self.value(w).data(),
            (k, 1),
            &cols,
            (hw, 1),
            &mut out,
            true,
        );
        let ng = self.needs(&[x, w, b]);
        Ok(self.push(
            Tensor::new(&[o, h, wd], out)?,
            Op::Conv3x3 { x, w, b, cols },
            ng,
        ))
    }

    /// Bilinear resize of `[c, h, w]` to `[c, out_h, out_w]`.
    pub fn resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let (c, h, w) = match self.value(x).shape()[..] {
            [c, h, w] => (c, h, w),
            ref s => return Err(shape_err!("resize input must be [c,h,w], got {s:?}")),
        };
        let out = resample::bilinear(self.value(x).data(), c, h, w, out_h, out_w);
        let ng = self.needs(&[x]);
        Ok(self.push(Tensor::new(&[c, out_h, out_w], out)?, Op::Resize(x), ng))
    }

    /// `[c, h, w]` -> `[patches, c*p*p]`, patches in raster order.
    pub fn patchify(&mut self, x: Var, patch: usize) -> Result<Var> {
        let (c, h, w) = match self.value(x).shape()[..] {
            [c, h, w] => (c, h, w),
            ref s => return Err(shape_err!("patchify input must be [c,h,w], got {s:?}")),
        };
        if patch == 0 || h % patch != 0 || w % patch != 0 {
            return Err(shape_err!("{h}x{w} not divisible into {patch}px patches"));
        }
        let src = self.value(x).data();
        let data = patchify_index(c, h, w, patch)
            .into_iter()
            .map(|i| src[i])
            .collect();
        let out = Tensor::matrix((h / patch) * (w / patch), c * patch * patch, data)?;
        let ng = self.needs(&[x]);
        Ok(self.push(out, Op::Patchify { x, patch }, ng))
    }

    /// `-log softmax(logits)[target]` for a single logit vector.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if target >= t.len() {
            return Err(shape_err!("target {target} out of {} classes", t.len()));
        }
        let mut probs = t.data().to_vec();
        softmax_in_place(&mut probs);
        let max = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + t.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - t.data()[target];
        let ng = self.needs(&[logits]);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
            ng,
        ))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape(), vec![1.0])?);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.propagate(i, &gy, &mut grads)?;
            grads[i] = Some(gy);
        }
        self.grads = grads;
        Ok(())
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients of trainable parameters, summed over every use.
    pub fn param_grads(&self) -> Gradients {
        let mut out = Gradients::default();
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, self.grads.get(i).and_then(Option::as_ref))
            {
                match out.map.get_mut(id) {
                    Some(acc) => acc.add_assign(g),
                    None => {
                        out.map.insert(*id, g.clone());
                    }
                }
            }
        }
        out
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn like(&self, v: Var, data: Vec<f64>) -> Tensor {
        Tensor::new(self.value(v).shape(), data).expect("gradient matches value shape")
    }

    fn propagate(&self, i: usize, gy: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &self.nodes[i].value;
        let g = gy.data();
        match &self.nodes[i].op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims2(self.value(*a))?;
                let n = self.value(*b).cols();
                if self.nodes[a.0].needs_grad {
                    let mut da = vec![0.0; m * k];
                    gemm(
                        m,
                        n,
                        k,
                        g,
                        (n, 1),
                        self.value(*b).data(),
                        (1, n),
                        &mut da,
                        false,
                    );
                    self.acc(grads, *a, self.like(*a, da));
                }
                if self.nodes[b.0].needs_grad {
                    let mut db = vec![0.0; k * n];
                    gemm(
                        k,
                        m,
                        n,
                        self.value(*a).data(),
                        (1, k),
                        g,
                        (n, 1),
                        &mut db,
                        false,
                    );
                    self.acc(grads, *b, self.like(*b, db));
                }
            }
            Op::MatMulNT(a, b) => {
                let (m, k) = dims2(self.value(*a))?;
                let n = self.value(*b).rows();
                if self.nodes[a.0].needs_grad {
                    let mut da = vec![0.0; m * k];
                    gemm(
                        m,
                        n,
                        k,
                        g,
                        (n, 1),
                        self.value(*b).data(),
                        (k, 1),
                        &mut da,
                        false,
                    );
                    self.acc(grads, *a, self.like(*a, da));
                }
                if self.nodes[b.0].needs_grad {
                    let mut db = vec![0.0; n * k];
                    gemm(
                        n,
                        m,
                        k,
                        g,
                        (1, n),
                        self.value(*a).data(),
                        (k, 1),
                        &mut db,
                        false,
                    );
                    self.acc(grads, *b, self.like(*b, db));
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, gy.clone());
                self.acc(grads, *b, gy.clone());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, gy.clone());
                self.acc(grads, *b, self.like(*b, g.iter().map(|v| -v).collect()));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let da = g.iter().zip(vb).map(|(g, b)| g * b).collect();
                let db = g.iter().zip(va).map(|(g, a)| g * a).collect();
                self.acc(grads, *a, self.like(*a, da));
                self.acc(grads, *b, self.like(*b, db));
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                let da = g.iter().zip(vb).map(|(g, b)| g / b).collect();
                let db = g
                    .iter()
                    .zip(va.iter().zip(vb))
                    .map(|(g, (a, b))| -g * a / (b * b))
                    .collect();
                self.acc(grads, *a, self.like(*a, da));
                self.acc(grads, *b, self.like(*b, db));
            }
            Op::AddRow(x, b) => {
                let n = self.value(*b).len();
                let mut db = vec![0.0; n];
                for (j, v) in g.iter().enumerate() {
                    db[j % n] += v;
                }
                self.acc(grads, *x, gy.clone());
                self.acc(grads, *b, self.like(*b, db));
            }
            Op::MulRow(x, r) => {
                let vr = self.value(*r).data();
                let vx = self.value(*x).data();
                let n = vr.len();
                let dx = g.iter().enumerate().map(|(j, v)| v * vr[j % n]).collect();
                let mut dr = vec![0.0; n];
                for (j, v) in g.iter().enumerate() {
                    dr[j % n] += v * vx[j];
                }
                self.acc(grads, *x, self.like(*x, dx));
                self.acc(grads, *r, self.like(*r, dr));
            }
            Op::Scale(x, s) => {
                self.acc(grads, *x, self.like(*x, g.iter().map(|v| v * s).collect()));
            }
            Op::AddScalar(x) => self.acc(grads, *x, gy.clone()),
            Op::Gelu(x) => {
                let vx = self.value(*x).data();
                let dx = g.iter().zip(vx).map(|(g, x)| g * gelu(*x).1).collect();
                self.acc(grads, *x, self.like(*x, dx));
            }
            Op::Sigmoid(x) => {
                let dx = g
                    .iter()
                    .zip(y.data())
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect();
                self.acc(grads, *x, self.like(*x, dx));
            }
            Op::SoftmaxRows(x) => {
                let c = y.cols();
                let mut dx = Vec::with_capacity(g.len());
                for (gr, yr) in g.chunks(c).zip(y.data().chunks(c)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    dx.extend(gr.iter().zip(yr).map(|(g, y)| y * (g - dot)));
                }
                self.acc(grads, *x, self.like(*x, dx));
            }
            Op::LayerNormRows(x) => {
                let c = y.cols();
                let vx = self.value(*x).data();
                let mut dx = Vec::with_capacity(g.len());
                for ((gr, yr), xr) in g.chunks(c).zip(y.data().chunks(c)).zip(vx.chunks(c)) {
                    let mean = xr.iter().sum::<f64>() / c as f64;
                    let var = xr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
                    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    let mg = gr.iter().sum::<f64>() / c as f64;
                    let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    dx.extend(gr.iter().zip(yr).map(|(g, y)| inv * (g - mg - y * mgy)));
                }
                self.acc(grads, *x, self.like(*x, dx));
            }
            Op::L2NormalizeRows(x) => {
                let c = y.cols();
                let vx = self.value(*x).data();
                let mut dx = Vec::with_capacity(g.len());
                for ((gr, yr), xr) in g.chunks(c).zip(y.data().chunks(c)).zip(vx.chunks(c)) {
                    let n = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    dx.extend(gr.iter().zip(yr).map(|(g, y)| (g - y * dot) / n));
                }
                self.acc(grads, *x, self.like(*x, dx));
            }
            Op::Transpose(x) => {
                let t = gy.transpose()?;
                self.acc(grads, *x, t);
            }
            Op::Reshape(x) => self.acc(grads, *x, self.like(*x, g.to_vec())),
            Op::ConcatCols(parts) => {
                let total = y.cols();
                let mut off = 0;
                for &p in parts {
                    let (r, c) = dims2(self.value(p))?;
                    if self.nodes[p.0].needs_grad {
                        let mut d = Vec::with_capacity(r * c);
                        for row in 0..r {
                            d.extend_from_slice(&g[row * total + off..row * total + off + c]);
                        }
                        self.acc(grads, p, self.like(p, d));
                    }
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.nodes[p.0].needs_grad {
                        self.acc(grads, p, self.like(p, g[off..off + n].to_vec()));
                    }
                    off += n;
                }
            }
            Op::SliceRows(x, start) => {
                let c = y.cols();
                let mut d = vec![0.0; self.value(*x).len()];
                d[start * c..start * c + g.len()].copy_from_slice(g);
                self.acc(grads, *x, self.like(*x, d));
            }
            Op::GatherRows(table, idx) => {
                let c = y.cols();
                let mut d = vec![0.0; self.value(*table).len()];
                for (k, &r) in idx.iter().enumerate() {
                    for j in 0..c {
                        d[r * c + j] += g[k * c + j];
                    }
                }
                self.acc(grads, *table, self.like(*table, d));
            }
            Op::MeanRows(x) => {
                let (r, c) = dims2(self.value(*x))?;
                let d = (0..r * c).map(|i| g[i % c] / r as f64).collect();
                self.acc(grads, *x, self.like(*x, d));
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.acc(grads, *x, self.like(*x, vec![g[0]; n]));
            }
            Op::Conv3x3 { x, w, b, cols } => {
                let (c, h, wd) = match self.value(*x).shape()[..] {
                    [c, h, w] => (c, h, w),
                    _ => unreachable!(),
                };
                let (o, k) = dims2(self.value(*w))?;
                let hw = h * wd;
                if self.nodes[w.0].needs_grad {
                    let mut dw = vec![0.0; o * k];
                    gemm(o, hw, k, g, (hw, 1), cols, (1, hw), &mut dw, false);
                    self.acc(grads, *w, self.like(*w, dw));
                }
                if self.nodes[b.0].needs_grad {
                    let db = g.chunks(hw).map(|r| r.iter().sum()).collect();
                    self.acc(grads, *b, self.like(*b, db));
                }
                if self.nodes[x.0].needs_grad {
                    let mut dcols = vec![0.0; k * hw];
                    gemm(
                        k,
                        o,
                        hw,
                        self.value(*w).data(),
                        (1, k),
                        g,
                        (hw, 1),
                        &mut dcols,
                        false,
                    );
                    self.acc(grads, *x, self.like(*x, col2im3(&dcols, c, h, wd)));
                }
            }
            Op::Resize(x) => {
                let (c, h, w) = match self.value(*x).shape()[..] {
                    [c, h, w] => (c, h, w),
                    _ => unreachable!(),
                };
                let (oh, ow) = (y.shape()[1], y.shape()[2]);
                let d = resample::bilinear_adjoint(g, c, h, w, oh, ow);
                self.acc(grads, *x, self.like(*x, d));
            }
            Op::Patchify { x, patch } => {
                let (c, h, w) = match self.value(*x).shape()[..] {
                    [c, h, w] => (c, h, w),
                    _ => unreachable!(),
                };
                let mut d = vec![0.0; c * h * w];
                for (o, src) in patchify_index(c, h, w, *patch).into_iter().enumerate() {
                    d[src] += g[o];
                }
                self.acc(grads, *x, self.like(*x, d));
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => {
                let d = probs
                    .iter()
                    .enumerate()
                    .map(|(j, p)| g[0] * (p - if j == *target { 1.0 } else { 0.0 }))
                    .collect();
                self.acc(grads, *logits, self.like(*logits, d));
            }
        }
        Ok(())
    }
}
