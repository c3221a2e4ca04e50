//! Tape-based reverse-mode autodiff over dense row-major tensors.
//!
//! A [`Graph`] records every tensor produced during a forward pass together
//! with the rule needed to push gradients back to its inputs. Node ids only
//! ever refer to earlier nodes, so a single reverse sweep over the tape is a
//! valid topological order. Caches needed by the backward rules (softmax
//! probabilities, normalization statistics) are stored on the node.
//!
//! Tensors are at most "matrix-like": every op interprets its input as
//! `rows x last_dim`, which covers `[batch, users, features]` activations
//! without explicit reshapes.

use super::real::{gemm, MatRef, Real};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Differentiable single-input operation defined outside the engine.
pub trait UnaryOp<T: Real>: Send {
    fn name(&self) -> &'static str;

    /// Computes the output and stashes whatever `backward` needs.
    fn forward(&mut self, input: &[T], shape: &[usize]) -> Result<(Vec<usize>, Vec<T>)>;

    /// Accumulates `d loss / d input` into `grad_in`.
    fn backward(&self, input: &[T], output: &[T], grad_out: &[T], grad_in: &mut [T]);
}

enum Op<T: Real> {
    Leaf,
    Affine { x: Var, w: Var, b: Option<Var>, rows: usize, inp: usize, out: usize },
    Add(Var, Var),
    Relu(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, cols: usize, xhat: Vec<T>, rstd: Vec<T> },
    Attention { q: Var, k: Var, v: Var, set_len: usize, heads: usize, probs: Vec<T> },
    NormalizeRows { x: Var, cols: usize, norms: Vec<T> },
    SumRows { x: Var, cols: usize },
    ScaleShift { x: Var, scale: T },
    Mean(Var),
    MinZero(Var),
    Reshape(Var),
    Custom { x: Var, op: Box<dyn UnaryOp<T>> },
}

/// A recorded value: shape, data, gradient slot and the rule that made it.
pub struct Tensor<T: Real> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
    /// Populated by [`Graph::backward`] for every node on a path to a
    /// trainable leaf.
    pub grad: Option<Vec<T>>,
    requires_grad: bool,
    trainable: bool,
    op: Op<T>,
}

impl<T: Real> Tensor<T> {
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_trainable(&self) -> bool {
        self.trainable
    }

    fn last_dim(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }
}

pub struct Graph<T: Real> {
    nodes: Vec<Tensor<T>>,
    dead_rows: usize,
    consumed: bool,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(msg: String) -> Error {
    Error::Dimension(msg)
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), dead_rows: 0, consumed: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tensor(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].data[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<T>> {
        self.nodes[v.0].grad.take()
    }

    /// Rows that hit the zero-norm fallback in [`Graph::normalize_rows`].
    pub fn dead_rows(&self) -> usize {
        self.dead_rows
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<T>, op: Op<T>, parents: &[Var]) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Tensor { shape, data, grad: None, requires_grad, trainable: false, op });
        Var(self.nodes.len() - 1)
    }

    fn leaf(&mut self, shape: &[usize], data: Vec<T>, trainable: bool) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(shape_err(format!("shape {shape:?} needs {n} values, got {}", data.len())));
        }
        self.nodes.push(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: trainable,
            trainable,
            op: Op::Leaf,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A leaf whose gradient is wanted.
    pub fn param(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        self.leaf(shape, data, true)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, shape: &[usize], data: Vec<T>) -> Result<Var> {
        self.leaf(shape, data, false)
    }

    /// `x W + b` applied to every row of `x` (`x: [.., in]`, `w: [in, out]`).
    pub fn affine(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (&self.nodes[x.0], &self.nodes[w.0]);
        if ws.shape.len() != 2 || xs.last_dim() != ws.shape[0] {
            return Err(shape_err(format!("affine: input {:?} with weight {:?}", xs.shape, ws.shape)));
        }
        let (inp, out) = (ws.shape[0], ws.shape[1]);
        let rows = xs.numel() / inp;
        if let Some(b) = b {
            if self.nodes[b.0].numel() != out {
                return Err(shape_err(format!(
                    "affine: bias of {} for {out} outputs",
                    self.nodes[b.0].numel()
                )));
            }
        }
        let mut y = vec![T::zero(); rows * out];
        if let Some(b) = b {
            let bias = &self.nodes[b.0].data;
            for row in y.chunks_exact_mut(out) {
                row.copy_from_slice(bias);
            }
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        gemm(MatRef::new(&xs.data, rows, inp), MatRef::new(&ws.data, inp, out), beta, &mut y);
        let mut shape = xs.shape.clone();
        *shape.last_mut().unwrap() = out;
        let mut parents = vec![x, w];
        parents.extend(b);
        Ok(self.push(shape, y, Op::Affine { x, w, b, rows, inp, out }, &parents))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if ta.shape != tb.shape {
            return Err(shape_err(format!("add: {:?} vs {:?}", ta.shape, tb.shape)));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(&x, &y)| x + y).collect();
        let shape = ta.shape.clone();
        Ok(self.push(shape, data, Op::Add(a, b), &[a, b]))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0];
        let data = t.data.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let shape = t.shape.clone();
        self.push(shape, data, Op::Relu(x), &[x])
    }

    /// Normalizes every row to zero mean and unit variance, then applies
    /// `gain` and `bias` (both of length `last_dim`).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let t = &self.nodes[x.0];
        let cols = t.last_dim();
        if self.nodes[gain.0].numel() != cols || self.nodes[bias.0].numel() != cols {
            return Err(shape_err(format!("layer_norm: parameters do not match width {cols}")));
        }
        let (g, b) = (&self.nodes[gain.0].data, &self.nodes[bias.0].data);
        let eps = T::lit(1e-5);
        let n = T::from_usize(cols).unwrap();
        let rows = t.numel() / cols;
        let mut xhat = vec![T::zero(); t.numel()];
        let mut rstd = vec![T::zero(); rows];
        let mut y = vec![T::zero(); t.numel()];
        for r in 0..rows {
            let row = &t.data[r * cols..(r + 1) * cols];
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for c in 0..cols {
                let xh = (row[c] - mean) * rs;
                xhat[r * cols + c] = xh;
                y[r * cols + c] = xh * g[c] + b[c];
            }
        }
        let shape = t.shape.clone();
        Ok(self.push(shape, y, Op::LayerNorm { x, gain, bias, cols, xhat, rstd }, &[x, gain, bias]))
    }

    /// Multi-head scaled dot-product attention within sets of `set_len`
    /// consecutive rows. `q`, `k`, `v` are `[rows, d]` with `d` split into
    /// `heads` contiguous slices. No masking and no positional terms.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, set_len: usize, heads: usize) -> Result<Var> {
        let shape = self.nodes[q.0].shape.clone();
        if self.nodes[k.0].shape != shape || self.nodes[v.0].shape != shape {
            return Err(shape_err("attention: q, k, v shapes differ".into()));
        }
        let d = *shape.last().unwrap_or(&0);
        let rows = self.nodes[q.0].numel() / d.max(1);
        if heads == 0 || !d.is_multiple_of(heads) || set_len == 0 || !rows.is_multiple_of(set_len) {
            return Err(shape_err(format!(
                "attention: width {d}, {heads} heads, {rows} rows in sets of {set_len}"
            )));
        }
        let dh = d / heads;
        let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
        let (qd, kd, vd) = (&self.nodes[q.0].data, &self.nodes[k.0].data, &self.nodes[v.0].data);
        let groups = rows / set_len;
        let n = set_len;
        let mut probs = vec![T::zero(); groups * heads * n * n];
        let mut out = vec![T::zero(); rows * d];
        let mut scores = vec![T::zero(); n];
        for g in 0..groups {
            for h in 0..heads {
                let off = h * dh;
                for i in 0..n {
                    let qi = &qd[(g * n + i) * d + off..][..dh];
                    let mut top = T::neg_infinity();
                    for (j, s) in scores.iter_mut().enumerate() {
                        let kj = &kd[(g * n + j) * d + off..][..dh];
                        *s = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
                        top = top.max(*s);
                    }
                    let mut total = T::zero();
                    for s in scores.iter_mut() {
                        *s = (*s - top).exp();
                        total += *s;
                    }
                    let p = &mut probs[((g * heads + h) * n + i) * n..][..n];
                    for (pj, s) in p.iter_mut().zip(&scores) {
                        *pj = *s / total;
                    }
                    let oi = &mut out[(g * n + i) * d + off..][..dh];
                    for (j, &pj) in p.iter().enumerate() {
                        let vj = &vd[(g * n + j) * d + off..][..dh];
                        for (o, &vv) in oi.iter_mut().zip(vj) {
                            *o += pj * vv;
                        }
                    }
                }
            }
        }
        Ok(self.push(shape, out, Op::Attention { q, k, v, set_len, heads, probs }, &[q, k, v]))
    }

    /// Divides every row by its Euclidean norm. Rows with norm below `1e-12`
    /// become `e_1`, pass no gradient, and are counted in [`Graph::dead_rows`].
    pub fn normalize_rows(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0];
        let cols = t.last_dim();
        let rows = t.numel() / cols.max(1);
        let mut out = vec![T::zero(); t.numel()];
        let mut norms = vec![T::zero(); rows];
        let mut dead = 0;
        let floor = T::lit(1e-12);
        for r in 0..rows {
            let row = &t.data[r * cols..(r + 1) * cols];
            let nrm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            let o = &mut out[r * cols..(r + 1) * cols];
            if nrm < floor || !nrm.is_finite() {
                dead += 1;
                o[0] = T::one();
            } else {
                norms[r] = nrm;
                for (oc, &v) in o.iter_mut().zip(row) {
                    *oc = v / nrm;
                }
            }
        }
        if dead > 0 {
            log::warn!("normalize_rows: {dead} zero-norm row(s) replaced by e1");
        }
        self.dead_rows += dead;
        let shape = t.shape.clone();
        self.push(shape, out, Op::NormalizeRows { x, cols, norms }, &[x])
    }

    /// Sums over the last dimension, dropping it.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0];
        let cols = t.last_dim();
        let data: Vec<T> = t.data.chunks_exact(cols).map(|r| r.iter().copied().sum()).collect();
        let mut shape = t.shape.clone();
        shape.pop();
        if shape.is_empty() {
            shape.push(1);
        }
        self.push(shape, data, Op::SumRows { x, cols }, &[x])
    }

    /// `scale * x + shift`, elementwise, with constant coefficients.
    pub fn scale_shift(&mut self, x: Var, scale: T, shift: T) -> Var {
        let t = &self.nodes[x.0];
        let data = t.data.iter().map(|&v| scale * v + shift).collect();
        let shape = t.shape.clone();
        self.push(shape, data, Op::ScaleShift { x, scale }, &[x])
    }

    /// Mean over all entries, as a one-element tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0];
        let m = t.data.iter().copied().sum::<T>() / T::from_usize(t.numel().max(1)).unwrap();
        self.push(vec![1], vec![m], Op::Mean(x), &[x])
    }

    /// `min(x, 0)` elementwise. The subgradient at exactly 0 is taken as 0.
    pub fn min_zero(&mut self, x: Var) -> Var {
        let t = &self.nodes[x.0];
        let data = t.data.iter().map(|&v| if v < T::zero() { v } else { T::zero() }).collect();
        let shape = t.shape.clone();
        self.push(shape, data, Op::MinZero(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = &self.nodes[x.0];
        if shape.iter().product::<usize>() != t.numel() {
            return Err(shape_err(format!("reshape {:?} -> {shape:?}", t.shape)));
        }
        let data = t.data.clone();
        Ok(self.push(shape.to_vec(), data, Op::Reshape(x), &[x]))
    }

    pub fn custom(&mut self, x: Var, mut op: Box<dyn UnaryOp<T>>) -> Result<Var> {
        let t = &self.nodes[x.0];
        let (shape, data) = op.forward(&t.data, &t.shape)?;
        if shape.iter().product::<usize>() != data.len() {
            return Err(shape_err(format!("{}: output shape {shape:?} vs {} values", op.name(), data.len())));
        }
        Ok(self.push(shape, data, Op::Custom { x, op }, &[x]))
    }

    /// Back-propagates from the scalar `loss`, filling the gradient slot of
    /// every node that depends on a trainable leaf. A graph can only be
    /// differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::InvalidInput("backward called twice on the same graph".into()));
        }
        let lt = &self.nodes[loss.0];
        if lt.numel() != 1 {
            return Err(Error::InvalidInput(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape
            )));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if node.requires_grad {
                node.grad = g;
            }
        }
        Ok(())
    }

    fn accumulate(&self, grads: &mut [Option<Vec<T>>], v: Var, local: &[T]) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, &b) in g.iter_mut().zip(local) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(local.to_vec()),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Affine { x, w, b, rows, inp, out } => {
                let (rows, inp, out) = (*rows, *inp, *out);
                let dy = MatRef::new(g, rows, out);
                if self.wants(*x) {
                    let mut dx = vec![T::zero(); rows * inp];
                    gemm(dy, MatRef::new(&self.nodes[w.0].data, inp, out).t(), T::zero(), &mut dx);
                    self.accumulate(grads, *x, &dx);
                }
                if self.wants(*w) {
                    let mut dw = vec![T::zero(); inp * out];
                    gemm(MatRef::new(&self.nodes[x.0].data, rows, inp).t(), dy, T::zero(), &mut dw);
                    self.accumulate(grads, *w, &dw);
                }
                if let Some(b) = b {
                    if self.wants(*b) {
                        let mut db = vec![T::zero(); out];
                        for row in g.chunks_exact(out) {
                            for (a, &v) in db.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                        self.accumulate(grads, *b, &db);
                    }
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g);
                self.accumulate(grads, *b, g);
            }
            Op::Relu(x) => {
                let dx: Vec<T> = node
                    .data
                    .iter()
                    .zip(g)
                    .map(|(&y, &d)| if y > T::zero() { d } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::LayerNorm { x, gain, bias, cols, xhat, rstd } => {
                let cols = *cols;
                let n = T::from_usize(cols).unwrap();
                let gv = &self.nodes[gain.0].data;
                let mut dx = vec![T::zero(); g.len()];
                let mut dgain = vec![T::zero(); cols];
                let mut dbias = vec![T::zero(); cols];
                for (r, (dyr, xhr)) in g.chunks_exact(cols).zip(xhat.chunks_exact(cols)).enumerate() {
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for c in 0..cols {
                        let dxh = dyr[c] * gv[c];
                        m1 += dxh;
                        m2 += dxh * xhr[c];
                        dgain[c] += dyr[c] * xhr[c];
                        dbias[c] += dyr[c];
                    }
                    m1 /= n;
                    m2 /= n;
                    for c in 0..cols {
                        dx[r * cols + c] = rstd[r] * (dyr[c] * gv[c] - m1 - xhr[c] * m2);
                    }
                }
                self.accumulate(grads, *x, &dx);
                self.accumulate(grads, *gain, &dgain);
                self.accumulate(grads, *bias, &dbias);
            }
            Op::Attention { q, k, v, set_len, heads, probs } => {
                let (n, heads) = (*set_len, *heads);
                let d = node.last_dim();
                let dh = d / heads;
                let rows = node.numel() / d;
                let groups = rows / n;
                let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
                let (qd, kd, vd) = (&self.nodes[q.0].data, &self.nodes[k.0].data, &self.nodes[v.0].data);
                let mut dq = vec![T::zero(); rows * d];
                let mut dk = vec![T::zero(); rows * d];
                let mut dv = vec![T::zero(); rows * d];
                let mut dp = vec![T::zero(); n];
                for gi in 0..groups {
                    for h in 0..heads {
                        let off = h * dh;
                        for i in 0..n {
                            let p = &probs[((gi * heads + h) * n + i) * n..][..n];
                            let doi = &g[(gi * n + i) * d + off..][..dh];
                            let mut inner = T::zero();
                            for j in 0..n {
                                let vj = &vd[(gi * n + j) * d + off..][..dh];
                                dp[j] = doi.iter().zip(vj).map(|(&a, &b)| a * b).sum();
                                inner += p[j] * dp[j];
                                let dvj = &mut dv[(gi * n + j) * d + off..][..dh];
                                for (a, &b) in dvj.iter_mut().zip(doi) {
                                    *a += p[j] * b;
                                }
                            }
                            let qi = &qd[(gi * n + i) * d + off..][..dh];
                            for j in 0..n {
                                let ds = p[j] * (dp[j] - inner) * scale;
                                let kj = &kd[(gi * n + j) * d + off..][..dh];
                                let dqi = &mut dq[(gi * n + i) * d + off..][..dh];
                                for (a, &b) in dqi.iter_mut().zip(kj) {
                                    *a += ds * b;
                                }
                                let dkj = &mut dk[(gi * n + j) * d + off..][..dh];
                                for (a, &b) in dkj.iter_mut().zip(qi) {
                                    *a += ds * b;
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *q, &dq);
                self.accumulate(grads, *k, &dk);
                self.accumulate(grads, *v, &dv);
            }
            Op::NormalizeRows { x, cols, norms } => {
                let cols = *cols;
                let mut dx = vec![T::zero(); g.len()];
                for (r, &nrm) in norms.iter().enumerate() {
                    if nrm == T::zero() {
                        continue;
                    }
                    let y = &node.data[r * cols..(r + 1) * cols];
                    let dy = &g[r * cols..(r + 1) * cols];
                    let proj: T = y.iter().zip(dy).map(|(&a, &b)| a * b).sum();
                    for c in 0..cols {
                        dx[r * cols + c] = (dy[c] - y[c] * proj) / nrm;
                    }
                }
                self.accumulate(grads, *x, &dx);
            }
            Op::SumRows { x, cols } => {
                let dx: Vec<T> = g.iter().flat_map(|&d| std::iter::repeat_n(d, *cols)).collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::ScaleShift { x, scale } => {
                let dx: Vec<T> = g.iter().map(|&d| d * *scale).collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::Mean(x) => {
                let n = self.nodes[x.0].numel();
                let share = g[0] / T::from_usize(n.max(1)).unwrap();
                self.accumulate(grads, *x, &vec![share; n]);
            }
            Op::MinZero(x) => {
                let xd = &self.nodes[x.0].data;
                let dx: Vec<T> = xd
                    .iter()
                    .zip(g)
                    .map(|(&v, &d)| if v < T::zero() { d } else { T::zero() })
                    .collect();
                self.accumulate(grads, *x, &dx);
            }
            Op::Reshape(x) => self.accumulate(grads, *x, g),
            Op::Custom { x, op } => {
                let mut dx = vec![T::zero(); self.nodes[x.0].numel()];
                op.backward(&self.nodes[x.0].data, &node.data, g, &mut dx);
                self.accumulate(grads, *x, &dx);
            }
        }
    }
}
