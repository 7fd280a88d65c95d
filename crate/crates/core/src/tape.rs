//! Reverse-mode gradient tape over a fixed set of tensor primitives.
//!
//! Every model in the crate is expressed with these primitives, so one
//! backward implementation (and one finite-difference check of it) covers
//! all of them. A tape is built per forward pass and discarded afterwards.

use crate::error::{Error, Result};
use crate::param::ParamSet;
use crate::tensor::{Real, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SliceCols { src: Var, start: usize },
    ConcatCols(Vec<Var>),
    Sum(Vec<Var>),
    TimeStep { src: Var, t: usize },
    SwapLastTwo(Var),
    Reshape(Var),
    Conv1d { input: Var, kernels: Var, bias: Var },
    MaxOverTime { src: Var, argmax: Vec<usize> },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        row_scale: Vec<T>,
        probs: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn req(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Constant input; no gradient is tracked.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Free variable whose gradient is reported by [`Grads::get`].
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds parameter `id` of `params`; its gradient lands in the parameter.
    pub fn param(&mut self, params: &ParamSet<T>, id: usize) -> Var {
        self.push(params.get(id).value.clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = crate::tensor::matmul(self.value(a), self.value(b))?;
        let req = self.req(a) || self.req(b);
        Ok(self.push(out, Op::MatMul(a, b), req))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::dim("add", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let req = self.req(a) || self.req(b);
        Ok(self.push(out, Op::Add(a, b), req))
    }

    /// `a[m×n] + bias[n]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if x.rank() != 2 || b.rank() != 1 || x.shape()[1] != b.shape()[0] {
            return Err(Error::dim("add_row", x.shape(), b.shape()));
        }
        let n = b.len();
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (v, &bv) in row.iter_mut().zip(b.data()) {
                *v = *v + bv;
            }
        }
        let req = self.req(a) || self.req(bias);
        Ok(self.push(out, Op::AddRow(a, bias), req))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::dim("mul", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| p * q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let req = self.req(a) || self.req(b);
        Ok(self.push(out, Op::Mul(a, b), req))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|v| v * s);
        let req = self.req(a);
        self.push(out, Op::Scale(a, s), req)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let req = self.req(a);
        self.push(out, Op::Sigmoid(a), req)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.tanh());
        let req = self.req(a);
        self.push(out, Op::Tanh(a), req)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.max(T::zero()));
        let req = self.req(a);
        self.push(out, Op::Relu(a), req)
    }

    /// Columns `[start, start+len)` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if x.rank() != 2 || len == 0 || start + len > x.shape()[1] {
            return Err(Error::dim("slice_cols", x.shape(), &[start, len]));
        }
        let (m, n) = (x.shape()[0], x.shape()[1]);
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&x.data()[i * n + start..i * n + start + len]);
        }
        let out = Tensor::new(vec![m, len], data)?;
        let req = self.req(a);
        Ok(self.push(out, Op::SliceCols { src: a, start }, req))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::dim("concat_cols", &[], &[]))?;
        let m = self.shape(*first)[0];
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != m {
                return Err(Error::dim("concat_cols", self.shape(*first), s));
            }
            total += s[1];
        }
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Tensor::new(vec![m, total], data)?;
        let req = parts.iter().any(|&p| self.req(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), req))
    }

    /// Elementwise sum of equally shaped tensors.
    pub fn sum(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::dim("sum", &[], &[]))?;
        let mut out = self.value(*first).clone();
        for &p in &parts[1..] {
            out.add_assign(self.value(p))
                .map_err(|_| Error::dim("sum", self.shape(*first), self.shape(p)))?;
        }
        let req = parts.iter().any(|&p| self.req(p));
        Ok(self.push(out, Op::Sum(parts.to_vec()), req))
    }

    /// `x[B×T×F]` → `x[:, t, :]` as `B×F`.
    pub fn time_step(&mut self, a: Var, t: usize) -> Result<Var> {
        let x = self.value(a);
        if x.rank() != 3 || t >= x.shape()[1] {
            return Err(Error::dim("time_step", x.shape(), &[t]));
        }
        let (b, steps, f) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let mut data = Vec::with_capacity(b * f);
        for i in 0..b {
            let off = (i * steps + t) * f;
            data.extend_from_slice(&x.data()[off..off + f]);
        }
        let out = Tensor::new(vec![b, f], data)?;
        let req = self.req(a);
        Ok(self.push(out, Op::TimeStep { src: a, t }, req))
    }

    /// `B×P×Q` → `B×Q×P`.
    pub fn swap_last_two(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.rank() != 3 {
            return Err(Error::dim("swap_last_two", x.shape(), &[0, 0, 0]));
        }
        let out = swap_last_two(x);
        let req = self.req(a);
        Ok(self.push(out, Op::SwapLastTwo(a), req))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        let req = self.req(a);
        Ok(self.push(out, Op::Reshape(a), req))
    }

    /// Valid (unpadded) cross-correlation over time.
    ///
    /// `input[B×Cin×T]`, `kernels[Cout×Cin×K]`, `bias[Cout]` → `B×Cout×(T−K+1)`.
    pub fn conv1d(&mut self, input: Var, kernels: Var, bias: Var) -> Result<Var> {
        let (x, w, b) = (self.value(input), self.value(kernels), self.value(bias));
        if x.rank() != 3 || w.rank() != 3 || x.shape()[1] != w.shape()[1] {
            return Err(Error::dim("conv1d", x.shape(), w.shape()));
        }
        if b.rank() != 1 || b.shape()[0] != w.shape()[0] {
            return Err(Error::dim("conv1d bias", w.shape(), b.shape()));
        }
        let (batch, cin, steps) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (cout, k) = (w.shape()[0], w.shape()[2]);
        if k > steps {
            return Err(Error::Config(format!(
                "conv1d kernel width {k} exceeds sequence length {steps}"
            )));
        }
        let len = steps - k + 1;
        let (xd, wd) = (x.data(), w.data());
        let mut out = vec![T::zero(); batch * cout * len];
        for n in 0..batch {
            for o in 0..cout {
                let dst = &mut out[(n * cout + o) * len..(n * cout + o + 1) * len];
                dst.iter_mut().for_each(|v| *v = b.data()[o]);
                for c in 0..cin {
                    let src = &xd[(n * cin + c) * steps..(n * cin + c + 1) * steps];
                    let ker = &wd[(o * cin + c) * k..(o * cin + c + 1) * k];
                    for (j, &wj) in ker.iter().enumerate() {
                        for (d, &s) in dst.iter_mut().zip(&src[j..j + len]) {
                            *d = *d + wj * s;
                        }
                    }
                }
            }
        }
        let out = Tensor::new(vec![batch, cout, len], out)?;
        let req = self.req(input) || self.req(kernels) || self.req(bias);
        Ok(self.push(
            out,
            Op::Conv1d {
                input,
                kernels,
                bias,
            },
            req,
        ))
    }

    /// Per-channel maximum over the last axis; ties resolve to the first index.
    pub fn max_over_time(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.rank() != 3 {
            return Err(Error::dim("max_over_time", x.shape(), &[0, 0, 0]));
        }
        let (b, c, l) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let mut vals = Vec::with_capacity(b * c);
        let mut argmax = Vec::with_capacity(b * c);
        for (row_idx, row) in x.data().chunks(l).enumerate() {
            let best = crate::tensor::argmax(row);
            vals.push(row[best]);
            argmax.push(row_idx * l + best);
        }
        let out = Tensor::new(vec![b, c], vals)?;
        let req = self.req(a);
        Ok(self.push(out, Op::MaxOverTime { src: a, argmax }, req))
    }

    /// Mean softmax cross-entropy over the batch, optionally class-weighted.
    ///
    /// With weights the loss is `(1/B)·Σ w[y_i]·(−log p_i[y_i])`.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        labels: &[usize],
        class_weights: Option<&[T]>,
    ) -> Result<Var> {
        let z = self.value(logits);
        if z.rank() != 2 || z.shape()[0] != labels.len() {
            return Err(Error::dim("cross_entropy", z.shape(), &[labels.len()]));
        }
        let (b, c) = (z.shape()[0], z.shape()[1]);
        if let Some(w) = class_weights {
            if w.len() != c {
                return Err(Error::dim("cross_entropy weights", &[c], &[w.len()]));
            }
        }
        if let Some(i) = labels.iter().position(|&y| y >= c) {
            return Err(Error::Data(format!(
                "label {} of sample {i} out of range for {c} classes",
                labels[i]
            )));
        }
        let inv_b = T::one() / T::from_f64(b as f64);
        let mut probs = Vec::with_capacity(b * c);
        let mut row_scale = Vec::with_capacity(b);
        let mut loss = T::zero();
        for (i, row) in z.data().chunks(c).enumerate() {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let sum: T = row.iter().map(|&v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            let scale = class_weights.map_or(T::one(), |w| w[labels[i]]) * inv_b;
            loss = loss + scale * (lse - row[labels[i]]);
            probs.extend(row.iter().map(|&v| (v - lse).exp()));
            row_scale.push(scale);
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                row_scale,
                probs,
            },
            self.req(logits),
        ))
    }

    /// Propagates d(loss)/d(node) from a scalar `loss` back to every leaf.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        if self.shape(loss) != [1] {
            return Err(Error::dim("backward", self.shape(loss), &[1]));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Input | Op::Leaf | Op::Param(_)) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, g, &mut grads)?;
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => grads[i].take().map(|g| (id, g)),
                _ => None,
            })
            .collect();
        Ok(Grads { nodes: grads, params })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) -> Result<()> {
        if !self.req(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(&self, node: &Node<T>, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Input | Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.req(*a) {
                    let mut da = Tensor::zeros(&[m, k]);
                    T::gemm(m, n, k, g.data(), (n as isize, 1), bv.data(), (1, n as isize), da.data_mut(), false);
                    self.accumulate(grads, *a, da)?;
                }
                if self.req(*b) {
                    let mut db = Tensor::zeros(&[k, n]);
                    T::gemm(k, m, n, av.data(), (1, k as isize), g.data(), (n as isize, 1), db.data_mut(), false);
                    self.accumulate(grads, *b, db)?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *b, g.clone())?;
                self.accumulate(grads, *a, g)?;
            }
            Op::AddRow(a, bias) => {
                if self.req(*bias) {
                    let n = self.value(*bias).len();
                    let mut db = Tensor::zeros(&[n]);
                    for row in g.data().chunks(n) {
                        for (d, &v) in db.data_mut().iter_mut().zip(row) {
                            *d = *d + v;
                        }
                    }
                    self.accumulate(grads, *bias, db)?;
                }
                self.accumulate(grads, *a, g)?;
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.req(*a) {
                    let da = zip_map(&g, bv, |gv, x| gv * x);
                    self.accumulate(grads, *a, da)?;
                }
                if self.req(*b) {
                    let db = zip_map(&g, av, |gv, x| gv * x);
                    self.accumulate(grads, *b, db)?;
                }
            }
            Op::Scale(a, s) => {
                let s = *s;
                self.accumulate(grads, *a, g.map(|v| v * s))?;
            }
            Op::Sigmoid(a) => {
                let da = zip_map(&g, y, |gv, yv| gv * yv * (T::one() - yv));
                self.accumulate(grads, *a, da)?;
            }
            Op::Tanh(a) => {
                let da = zip_map(&g, y, |gv, yv| gv * (T::one() - yv * yv));
                self.accumulate(grads, *a, da)?;
            }
            Op::Relu(a) => {
                let da = zip_map(&g, y, |gv, yv| if yv > T::zero() { gv } else { T::zero() });
                self.accumulate(grads, *a, da)?;
            }
            Op::SliceCols { src, start } => {
                let s = self.shape(*src);
                let (m, n) = (s[0], s[1]);
                let len = g.shape()[1];
                let mut d = Tensor::zeros(&[m, n]);
                for i in 0..m {
                    d.data_mut()[i * n + start..i * n + start + len].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *src, d)?;
            }
            Op::ConcatCols(parts) => {
                let m = g.shape()[0];
                let total = g.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p)[1];
                    if self.req(p) {
                        let mut d = Vec::with_capacity(m * w);
                        for i in 0..m {
                            d.extend_from_slice(&g.data()[i * total + offset..i * total + offset + w]);
                        }
                        self.accumulate(grads, p, Tensor::new(vec![m, w], d)?)?;
                    }
                    offset += w;
                }
            }
            Op::Sum(parts) => {
                for &p in parts {
                    self.accumulate(grads, p, g.clone())?;
                }
            }
            Op::TimeStep { src, t } => {
                let s = self.shape(*src).to_vec();
                let (b, steps, f) = (s[0], s[1], s[2]);
                let mut d = Tensor::zeros(&s);
                for i in 0..b {
                    let off = (i * steps + t) * f;
                    d.data_mut()[off..off + f].copy_from_slice(g.row(i));
                }
                self.accumulate(grads, *src, d)?;
            }
            Op::SwapLastTwo(a) => {
                self.accumulate(grads, *a, swap_last_two(&g))?;
            }
            Op::Reshape(a) => {
                let shape = self.shape(*a).to_vec();
                self.accumulate(grads, *a, g.reshaped(&shape)?)?;
            }
            Op::Conv1d {
                input,
                kernels,
                bias,
            } => {
                let (x, w) = (self.value(*input), self.value(*kernels));
                let (batch, cin, steps) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let (cout, k) = (w.shape()[0], w.shape()[2]);
                let len = steps - k + 1;
                let gd = g.data();
                if self.req(*bias) {
                    let mut db = Tensor::zeros(&[cout]);
                    for n in 0..batch {
                        for o in 0..cout {
                            let s: T = gd[(n * cout + o) * len..(n * cout + o + 1) * len].iter().copied().sum();
                            db.data_mut()[o] = db.data()[o] + s;
                        }
                    }
                    self.accumulate(grads, *bias, db)?;
                }
                if self.req(*kernels) {
                    let mut dw = Tensor::zeros(w.shape());
                    let dwd = dw.data_mut();
                    for n in 0..batch {
                        for o in 0..cout {
                            let go = &gd[(n * cout + o) * len..(n * cout + o + 1) * len];
                            for c in 0..cin {
                                let src = &x.data()[(n * cin + c) * steps..(n * cin + c + 1) * steps];
                                for j in 0..k {
                                    let s: T = go.iter().zip(&src[j..j + len]).map(|(&a, &b)| a * b).sum();
                                    let idx = (o * cin + c) * k + j;
                                    dwd[idx] = dwd[idx] + s;
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *kernels, dw)?;
                }
                if self.req(*input) {
                    let mut dx = Tensor::zeros(x.shape());
                    let dxd = dx.data_mut();
                    for n in 0..batch {
                        for o in 0..cout {
                            let go = &gd[(n * cout + o) * len..(n * cout + o + 1) * len];
                            for c in 0..cin {
                                let ker = &w.data()[(o * cin + c) * k..(o * cin + c + 1) * k];
                                let dst = &mut dxd[(n * cin + c) * steps..(n * cin + c + 1) * steps];
                                for (j, &wj) in ker.iter().enumerate() {
                                    for (d, &gv) in dst[j..j + len].iter_mut().zip(go) {
                                        *d = *d + wj * gv;
                                    }
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *input, dx)?;
                }
            }
            Op::MaxOverTime { src, argmax } => {
                let mut d = Tensor::zeros(self.shape(*src));
                for (&pos, &gv) in argmax.iter().zip(g.data()) {
                    d.data_mut()[pos] = gv;
                }
                self.accumulate(grads, *src, d)?;
            }
            Op::CrossEntropy {
                logits,
                labels,
                row_scale,
                probs,
            } => {
                let upstream = g.data()[0];
                let c = self.shape(*logits)[1];
                let mut d = probs.clone();
                for (i, row) in d.chunks_mut(c).enumerate() {
                    row[labels[i]] = row[labels[i]] - T::one();
                    let s = upstream * row_scale[i];
                    row.iter_mut().for_each(|v| *v = *v * s);
                }
                let shape = self.shape(*logits).to_vec();
                self.accumulate(grads, *logits, Tensor::new(shape, d)?)?;
            }
        }
        Ok(())
    }
}

/// Gradients produced by [`Tape::backward`].
pub struct Grads<T> {
    nodes: Vec<Option<Tensor<T>>>,
    params: Vec<(usize, Tensor<T>)>,
}

impl<T: Real> Grads<T> {
    /// Gradient of a [`Tape::leaf`]; `None` if the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    /// Adds parameter gradients into `params[*].grad`.
    pub fn accumulate_into(self, params: &mut ParamSet<T>) -> Result<()> {
        for (id, g) in self.params {
            params.get_mut(id).grad.add_assign(&g)?;
        }
        Ok(())
    }
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip_map: shapes validated at forward time")
}

fn swap_last_two<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (b, p, q) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = vec![T::zero(); x.len()];
    for n in 0..b {
        for i in 0..p {
            for j in 0..q {
                out[(n * q + j) * p + i] = x.data()[(n * p + i) * q + j];
            }
        }
    }
    Tensor::new(vec![b, q, p], out).expect("swap_last_two: same element count")
}
