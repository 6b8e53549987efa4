use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use crate::error::{Error, Result};

use super::scalar::{gemm, Layout};
use super::{Scalar, Tensor};

/// Batchnorm variance guard.
pub const BN_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Batchnorm normalization source.
#[derive(Clone, Copy, Debug)]
pub enum BnMode<'a, F> {
    /// Normalize with the statistics of the current batch.
    Train,
    /// Normalize with frozen running statistics.
    Eval { mean: &'a [F], var: &'a [F] },
}

/// Per-channel statistics of one training-mode batchnorm call.
#[derive(Clone, Debug)]
pub struct BatchStats<F> {
    pub mean: Vec<F>,
    /// Unbiased (n-1) variance, used for running-stat updates.
    pub var: Vec<F>,
}

enum Op<F> {
    Leaf,
    Conv1d {
        input: Var,
        weight: Var,
        stride: usize,
        padding: usize,
        /// im2col buffer, kept only when the weight needs a gradient.
        cols: Vec<F>,
    },
    BatchNorm {
        input: Var,
        scale: Var,
        shift: Var,
        xhat: Vec<F>,
        inv_std: Vec<F>,
        batch_coupled: bool,
    },
    Relu {
        input: Var,
    },
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        input: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Softmax {
        input: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        probs: Vec<F>,
        targets: Vec<usize>,
    },
    Pick {
        input: Var,
        indices: Vec<usize>,
    },
    Sum {
        input: Var,
    },
    Scale {
        input: Var,
        factor: F,
    },
}

struct Node<F> {
    value: Arc<Tensor<F>>,
    requires_grad: bool,
    op: Op<F>,
}

/// Reverse-mode differentiation tape.
///
/// Operations append nodes in execution order; [`Tape::backward`] walks them
/// in exact reverse order and accumulates gradients additively. Nodes that
/// do not depend on any gradient-requiring leaf keep no backward caches.
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
    grads: Vec<Option<Vec<F>>>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<F>, requires_grad: bool, op: Op<F>) -> Var {
        self.push_shared(Arc::new(value), requires_grad, op)
    }

    fn push_shared(&mut self, value: Arc<Tensor<F>>, requires_grad: bool, op: Op<F>) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&mut self, value: Arc<Tensor<F>>) -> Var {
        self.push_shared(value, true, Op::Leaf)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Arc<Tensor<F>>) -> Var {
        self.push_shared(value, false, Op::Leaf)
    }

    pub fn leaf(&mut self, value: Tensor<F>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shared_value(&self, v: Var) -> Arc<Tensor<F>> {
        Arc::clone(&self.nodes[v.0].value)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient accumulated by the last [`Tape::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&[F]> {
        self.grads[v.0].as_deref()
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// 1-D cross-correlation: input `[N, C_in, L]`, weight `[C_out, C_in, K]`.
    pub fn conv1d(&mut self, input: Var, weight: Var, stride: usize, padding: usize) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] || stride == 0 {
            return Err(Error::Shape(format!(
                "conv1d input {xs:?} weight {ws:?} stride {stride}"
            )));
        }
        let (n, c_in, len) = (xs[0], xs[1], xs[2]);
        let (c_out, k) = (ws[0], ws[2]);
        if len + 2 * padding < k {
            return Err(Error::Shape(format!(
                "conv1d kernel {k} longer than padded input {}",
                len + 2 * padding
            )));
        }
        let l_out = (len + 2 * padding - k) / stride + 1;
        let cols = im2col(self.value(input).data(), n, c_in, len, k, stride, padding, l_out);
        let cols_n = n * l_out;
        let mut mat = vec![F::zero(); c_out * cols_n];
        gemm(
            c_out,
            c_in * k,
            cols_n,
            F::one(),
            self.value(weight).data(),
            Layout::Plain,
            &cols,
            Layout::Plain,
            F::zero(),
            &mut mat,
        );
        let mut out = vec![F::zero(); n * c_out * l_out];
        for co in 0..c_out {
            for b in 0..n {
                let src = &mat[co * cols_n + b * l_out..co * cols_n + (b + 1) * l_out];
                out[(b * c_out + co) * l_out..(b * c_out + co + 1) * l_out].copy_from_slice(src);
            }
        }
        let rg = self.rg(&[input, weight]);
        let keep_cols = self.requires_grad(weight);
        let op = if rg {
            Op::Conv1d {
                input,
                weight,
                stride,
                padding,
                cols: if keep_cols { cols } else { Vec::new() },
            }
        } else {
            Op::Leaf
        };
        Ok(self.push(Tensor::new(vec![n, c_out, l_out], out)?, rg, op))
    }

    /// Batch normalization over `[N, C, L]`, per channel.
    ///
    /// Training mode returns the batch statistics so the caller can update
    /// its running estimates.
    pub fn batchnorm(
        &mut self,
        input: Var,
        scale: Var,
        shift: Var,
        mode: BnMode<'_, F>,
    ) -> Result<(Var, Option<BatchStats<F>>)> {
        let xs = self.shape(input).to_vec();
        if xs.len() != 3 {
            return Err(Error::Shape(format!("batchnorm expects [N, C, L], got {xs:?}")));
        }
        let (n, c, len) = (xs[0], xs[1], xs[2]);
        if self.shape(scale) != [c] || self.shape(shift) != [c] {
            return Err(Error::Shape("batchnorm affine size".into()));
        }
        let count = n * len;
        if count == 0 {
            return Err(Error::Shape("batchnorm over an empty batch".into()));
        }
        let eps = F::of(BN_EPS);
        let x = self.value(input).data();
        let mut mean = vec![F::zero(); c];
        let mut var = vec![F::zero(); c];
        let mut stats = None;
        match mode {
            BnMode::Train => {
                let m = F::of(count as f64);
                for ch in 0..c {
                    let mut s = 0.0f64;
                    for b in 0..n {
                        let row = &x[(b * c + ch) * len..(b * c + ch + 1) * len];
                        s += row.iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                    let mu = s / count as f64;
                    let mut ss = 0.0f64;
                    for b in 0..n {
                        let row = &x[(b * c + ch) * len..(b * c + ch + 1) * len];
                        ss += row.iter().map(|v| (v.as_f64() - mu).powi(2)).sum::<f64>();
                    }
                    mean[ch] = F::of(mu);
                    var[ch] = F::of(ss) / m;
                }
                let unbiased = var
                    .iter()
                    .map(|&v| {
                        if count > 1 {
                            v * F::of(count as f64 / (count - 1) as f64)
                        } else {
                            v
                        }
                    })
                    .collect();
                stats = Some(BatchStats {
                    mean: mean.clone(),
                    var: unbiased,
                });
            }
            BnMode::Eval { mean: rm, var: rv } => {
                if rm.len() != c || rv.len() != c {
                    return Err(Error::Shape("batchnorm running stats size".into()));
                }
                mean.copy_from_slice(rm);
                var.copy_from_slice(rv);
            }
        }
        let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + eps).sqrt()).collect();
        let g = self.value(scale).data();
        let be = self.value(shift).data();
        let mut xhat = vec![F::zero(); x.len()];
        let mut out = vec![F::zero(); x.len()];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * len;
                for i in base..base + len {
                    let h = (x[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = h;
                    out[i] = g[ch] * h + be[ch];
                }
            }
        }
        let rg = self.rg(&[input, scale, shift]);
        let op = if rg {
            Op::BatchNorm {
                input,
                scale,
                shift,
                xhat,
                inv_std,
                batch_coupled: matches!(mode, BnMode::Train),
            }
        } else {
            Op::Leaf
        };
        Ok((self.push(Tensor::new(xs, out)?, rg, op), stats))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let v = self.value(input);
        let out: Vec<F> = v.data().iter().map(|&x| x.max(F::zero())).collect();
        let shape = v.shape().to_vec();
        let rg = self.rg(&[input]);
        let op = if rg { Op::Relu { input } } else { Op::Leaf };
        self.push(Tensor { shape, data: out }, rg, op)
    }

    /// Max pooling along the last axis of `[N, C, L]`; padding acts as `-inf`.
    pub fn max_pool1d(&mut self, input: Var, kernel: usize, stride: usize, padding: usize) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        if xs.len() != 3 || kernel == 0 || stride == 0 || xs[2] + 2 * padding < kernel {
            return Err(Error::Shape(format!("max_pool1d on {xs:?} kernel {kernel}")));
        }
        let (n, c, len) = (xs[0], xs[1], xs[2]);
        let l_out = (len + 2 * padding - kernel) / stride + 1;
        let x = self.value(input).data();
        let mut out = vec![F::zero(); n * c * l_out];
        let mut argmax = vec![0usize; n * c * l_out];
        for row in 0..n * c {
            let xr = &x[row * len..(row + 1) * len];
            for o in 0..l_out {
                let start = (o * stride) as isize - padding as isize;
                let mut best = F::neg_infinity();
                let mut best_i = 0usize;
                for t in 0..kernel {
                    let i = start + t as isize;
                    if i < 0 || i >= len as isize {
                        continue;
                    }
                    let val = xr[i as usize];
                    if val > best {
                        best = val;
                        best_i = i as usize;
                    }
                }
                out[row * l_out + o] = best;
                argmax[row * l_out + o] = row * len + best_i;
            }
        }
        let rg = self.rg(&[input]);
        let op = if rg { Op::MaxPool { input, argmax } } else { Op::Leaf };
        Ok(self.push(Tensor::new(vec![n, c, l_out], out)?, rg, op))
    }

    /// Mean over the last axis: `[N, C, L] -> [N, C]`.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        if xs.len() != 3 || xs[2] == 0 {
            return Err(Error::Shape(format!("global_avg_pool on {xs:?}")));
        }
        let (n, c, len) = (xs[0], xs[1], xs[2]);
        let inv = F::one() / F::of(len as f64);
        let out: Vec<F> = self
            .value(input)
            .data()
            .chunks(len)
            .map(|row| row.iter().copied().sum::<F>() * inv)
            .collect();
        let rg = self.rg(&[input]);
        let op = if rg { Op::GlobalAvgPool { input } } else { Op::Leaf };
        Ok(self.push(Tensor::new(vec![n, c], out)?, rg, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "add {:?} + {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out: Vec<F> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x + y)
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(&[a, b]);
        let op = if rg { Op::Add { a, b } } else { Op::Leaf };
        Ok(self.push(Tensor { shape, data: out }, rg, op))
    }

    /// Fully-connected layer: input `[N, I]`, weight `[O, I]`, bias `[O]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || self.shape(bias) != [ws[0]] {
            return Err(Error::Shape(format!("linear input {xs:?} weight {ws:?}")));
        }
        let (n, i, o) = (xs[0], xs[1], ws[0]);
        let mut out = vec![F::zero(); n * o];
        for row in out.chunks_mut(o) {
            row.copy_from_slice(self.value(bias).data());
        }
        gemm(
            n,
            i,
            o,
            F::one(),
            self.value(input).data(),
            Layout::Plain,
            self.value(weight).data(),
            Layout::Trans,
            F::one(),
            &mut out,
        );
        let rg = self.rg(&[input, weight, bias]);
        let op = if rg {
            Op::Linear {
                input,
                weight,
                bias,
            }
        } else {
            Op::Leaf
        };
        Ok(self.push(Tensor::new(vec![n, o], out)?, rg, op))
    }

    /// Row-wise softmax of `[N, K]`.
    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        if xs.len() != 2 || xs[1] == 0 {
            return Err(Error::Shape(format!("softmax on {xs:?}")));
        }
        let k = xs[1];
        let mut out = Vec::with_capacity(xs[0] * k);
        for row in self.value(input).data().chunks(k) {
            out.extend(softmax_row(row));
        }
        let rg = self.rg(&[input]);
        let op = if rg { Op::Softmax { input } } else { Op::Leaf };
        Ok(self.push(Tensor::new(xs, out)?, rg, op))
    }

    /// Mean categorical cross-entropy of `[N, K]` logits against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let xs = self.shape(logits).to_vec();
        if xs.len() != 2 || xs[0] != targets.len() || xs[0] == 0 {
            return Err(Error::Shape(format!(
                "cross-entropy logits {xs:?} with {} targets",
                targets.len()
            )));
        }
        let k = xs[1];
        if let Some(&t) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::ClassIndex(t));
        }
        let mut probs = Vec::with_capacity(xs[0] * k);
        let mut loss = 0.0f64;
        for (row, &t) in self.value(logits).data().chunks(k).zip(targets) {
            let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
            let lse = row
                .iter()
                .map(|&v| (v - max).as_f64().exp())
                .sum::<f64>()
                .ln()
                + max.as_f64();
            loss += lse - row[t].as_f64();
            probs.extend(softmax_row(row));
        }
        loss /= xs[0] as f64;
        let rg = self.rg(&[logits]);
        let op = if rg {
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                targets: targets.to_vec(),
            }
        } else {
            Op::Leaf
        };
        Ok(self.push(Tensor::scalar(F::of(loss)), rg, op))
    }

    /// Gathers flat element indices into a 1-D tensor.
    pub fn pick(&mut self, input: Var, indices: &[usize]) -> Result<Var> {
        let n = self.value(input).len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Shape(format!("pick index {bad} out of {n}")));
        }
        let data = self.value(input).data();
        let out: Vec<F> = indices.iter().map(|&i| data[i]).collect();
        let rg = self.rg(&[input]);
        let op = if rg {
            Op::Pick {
                input,
                indices: indices.to_vec(),
            }
        } else {
            Op::Leaf
        };
        Ok(self.push(Tensor::new(vec![indices.len()], out)?, rg, op))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data().iter().copied().sum::<F>();
        let rg = self.rg(&[input]);
        let op = if rg { Op::Sum { input } } else { Op::Leaf };
        self.push(Tensor::scalar(s), rg, op)
    }

    pub fn scale(&mut self, input: Var, factor: F) -> Var {
        let v = self.value(input);
        let out: Vec<F> = v.data().iter().map(|&x| x * factor).collect();
        let shape = v.shape().to_vec();
        let rg = self.rg(&[input]);
        let op = if rg { Op::Scale { input, factor } } else { Op::Leaf };
        self.push(Tensor { shape, data: out }, rg, op)
    }

    pub fn mean(&mut self, input: Var) -> Var {
        let n = self.value(input).len().max(1);
        let s = self.sum(input);
        self.scale(s, F::one() / F::of(n as f64))
    }

    /// Hash of every piecewise-linear branch taken so far (ReLU signs and
    /// max-pool winners). Two forward passes with equal signatures evaluate
    /// the same smooth piece of the network.
    pub fn kink_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu { input } => {
                    for &x in self.nodes[input.0].value.data() {
                        (x > F::zero()).hash(&mut h);
                    }
                }
                Op::MaxPool { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    /// Backpropagates from a scalar `loss`, replacing any previous gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if loss.0 >= self.nodes.len()
            || !self.nodes[loss.0].requires_grad
            || self.nodes[loss.0].value.len() != 1
        {
            return Err(Error::Detached);
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![F::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(upstream) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &upstream);
            self.grads[idx] = Some(upstream);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contribution: Vec<F>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => {
                for (a, b) in g.iter_mut().zip(contribution) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }

    fn propagate(&mut self, idx: usize, dy: &[F]) {
        // Split borrows: nodes are read-only while grads are accumulated.
        let nodes = std::mem::take(&mut self.nodes);
        let node = &nodes[idx];
        let mut pending: Vec<(Var, Vec<F>)> = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d {
                input,
                weight,
                stride,
                padding,
                cols,
            } => {
                let xs = nodes[input.0].value.shape();
                let ws = nodes[weight.0].value.shape();
                let (n, c_in, len) = (xs[0], xs[1], xs[2]);
                let (c_out, k) = (ws[0], ws[2]);
                let l_out = node.value.shape()[2];
                let cols_n = n * l_out;
                let mut dmat = vec![F::zero(); c_out * cols_n];
                for b in 0..n {
                    for co in 0..c_out {
                        dmat[co * cols_n + b * l_out..co * cols_n + (b + 1) * l_out]
                            .copy_from_slice(&dy[(b * c_out + co) * l_out..(b * c_out + co + 1) * l_out]);
                    }
                }
                if nodes[weight.0].requires_grad {
                    let mut dw = vec![F::zero(); c_out * c_in * k];
                    gemm(
                        c_out,
                        cols_n,
                        c_in * k,
                        F::one(),
                        &dmat,
                        Layout::Plain,
                        cols,
                        Layout::Trans,
                        F::zero(),
                        &mut dw,
                    );
                    pending.push((*weight, dw));
                }
                if nodes[input.0].requires_grad {
                    let mut dcols = vec![F::zero(); c_in * k * cols_n];
                    gemm(
                        c_in * k,
                        c_out,
                        cols_n,
                        F::one(),
                        nodes[weight.0].value.data(),
                        Layout::Trans,
                        &dmat,
                        Layout::Plain,
                        F::zero(),
                        &mut dcols,
                    );
                    let dx = col2im(&dcols, n, c_in, len, k, *stride, *padding, l_out);
                    pending.push((*input, dx));
                }
            }
            Op::BatchNorm {
                input,
                scale,
                shift,
                xhat,
                inv_std,
                batch_coupled,
            } => {
                let xs = nodes[input.0].value.shape();
                let (n, c, len) = (xs[0], xs[1], xs[2]);
                let g = nodes[scale.0].value.data();
                let mut dg = vec![F::zero(); c];
                let mut db = vec![F::zero(); c];
                for b in 0..n {
                    for ch in 0..c {
                        let base = (b * c + ch) * len;
                        for i in base..base + len {
                            dg[ch] += dy[i] * xhat[i];
                            db[ch] += dy[i];
                        }
                    }
                }
                if nodes[input.0].requires_grad {
                    let mut dx = vec![F::zero(); dy.len()];
                    let m = F::of((n * len) as f64);
                    for b in 0..n {
                        for ch in 0..c {
                            let base = (b * c + ch) * len;
                            let coef = g[ch] * inv_std[ch];
                            for i in base..base + len {
                                dx[i] = if *batch_coupled {
                                    coef * (dy[i] - db[ch] / m - xhat[i] * dg[ch] / m)
                                } else {
                                    coef * dy[i]
                                };
                            }
                        }
                    }
                    pending.push((*input, dx));
                }
                pending.push((*scale, dg));
                pending.push((*shift, db));
            }
            Op::Relu { input } => {
                let x = nodes[input.0].value.data();
                let dx: Vec<F> = x
                    .iter()
                    .zip(dy)
                    .map(|(&xi, &d)| if xi > F::zero() { d } else { F::zero() })
                    .collect();
                #[cfg(test)]
                let dx: Vec<F> = if tests::CORRUPT_RELU.with(|c| c.get()) {
                    dx.into_iter().map(|d| d * F::of(1.5)).collect()
                } else {
                    dx
                };
                pending.push((*input, dx));
            }
            Op::MaxPool { input, argmax } => {
                let mut dx = vec![F::zero(); nodes[input.0].value.len()];
                for (&src, &d) in argmax.iter().zip(dy) {
                    dx[src] += d;
                }
                pending.push((*input, dx));
            }
            Op::GlobalAvgPool { input } => {
                let len = nodes[input.0].value.shape()[2];
                let inv = F::one() / F::of(len as f64);
                let mut dx = Vec::with_capacity(nodes[input.0].value.len());
                for &d in dy {
                    dx.extend(std::iter::repeat_n(d * inv, len));
                }
                pending.push((*input, dx));
            }
            Op::Add { a, b } => {
                pending.push((*a, dy.to_vec()));
                pending.push((*b, dy.to_vec()));
            }
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let xs = nodes[input.0].value.shape();
                let (n, i) = (xs[0], xs[1]);
                let o = nodes[weight.0].value.shape()[0];
                if nodes[input.0].requires_grad {
                    let mut dx = vec![F::zero(); n * i];
                    gemm(
                        n,
                        o,
                        i,
                        F::one(),
                        dy,
                        Layout::Plain,
                        nodes[weight.0].value.data(),
                        Layout::Plain,
                        F::zero(),
                        &mut dx,
                    );
                    pending.push((*input, dx));
                }
                if nodes[weight.0].requires_grad {
                    let mut dw = vec![F::zero(); o * i];
                    gemm(
                        o,
                        n,
                        i,
                        F::one(),
                        dy,
                        Layout::Trans,
                        nodes[input.0].value.data(),
                        Layout::Plain,
                        F::zero(),
                        &mut dw,
                    );
                    pending.push((*weight, dw));
                }
                let mut db = vec![F::zero(); o];
                for row in dy.chunks(o) {
                    for (a, &b) in db.iter_mut().zip(row) {
                        *a += b;
                    }
                }
                pending.push((*bias, db));
            }
            Op::Softmax { input } => {
                let k = node.value.shape()[1];
                let p = node.value.data();
                let mut dx = Vec::with_capacity(p.len());
                for (pr, dr) in p.chunks(k).zip(dy.chunks(k)) {
                    let dot: F = pr.iter().zip(dr).map(|(&a, &b)| a * b).sum();
                    dx.extend(pr.iter().zip(dr).map(|(&pi, &di)| pi * (di - dot)));
                }
                pending.push((*input, dx));
            }
            Op::SoftmaxCrossEntropy {
                logits,
                probs,
                targets,
            } => {
                let k = nodes[logits.0].value.shape()[1];
                let scale = dy[0] / F::of(targets.len() as f64);
                let mut dx: Vec<F> = probs.iter().map(|&p| p * scale).collect();
                for (row, &t) in targets.iter().enumerate() {
                    dx[row * k + t] -= scale;
                }
                pending.push((*logits, dx));
            }
            Op::Pick { input, indices } => {
                let mut dx = vec![F::zero(); nodes[input.0].value.len()];
                for (&i, &d) in indices.iter().zip(dy) {
                    dx[i] += d;
                }
                pending.push((*input, dx));
            }
            Op::Sum { input } => {
                pending.push((*input, vec![dy[0]; nodes[input.0].value.len()]));
            }
            Op::Scale { input, factor } => {
                pending.push((*input, dy.iter().map(|&d| d * *factor).collect()));
            }
        }
        self.nodes = nodes;
        for (v, g) in pending {
            self.accumulate(v, g);
        }
    }
}

fn softmax_row<F: Scalar>(row: &[F]) -> Vec<F> {
    let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<f64> = row.iter().map(|&v| (v - max).as_f64().exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| F::of(e / z)).collect()
}

#[allow(clippy::too_many_arguments)]
fn im2col<F: Scalar>(
    x: &[F],
    n: usize,
    c_in: usize,
    len: usize,
    k: usize,
    stride: usize,
    padding: usize,
    l_out: usize,
) -> Vec<F> {
    let cols_n = n * l_out;
    let mut cols = vec![F::zero(); c_in * k * cols_n];
    for ci in 0..c_in {
        for t in 0..k {
            let row = &mut cols[(ci * k + t) * cols_n..(ci * k + t + 1) * cols_n];
            for b in 0..n {
                let xr = &x[(b * c_in + ci) * len..(b * c_in + ci + 1) * len];
                let dst = &mut row[b * l_out..(b + 1) * l_out];
                for (o, d) in dst.iter_mut().enumerate() {
                    let i = (o * stride + t) as isize - padding as isize;
                    if i >= 0 && (i as usize) < len {
                        *d = xr[i as usize];
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im<F: Scalar>(
    cols: &[F],
    n: usize,
    c_in: usize,
    len: usize,
    k: usize,
    stride: usize,
    padding: usize,
    l_out: usize,
) -> Vec<F> {
    let cols_n = n * l_out;
    let mut x = vec![F::zero(); n * c_in * len];
    for ci in 0..c_in {
        for t in 0..k {
            let row = &cols[(ci * k + t) * cols_n..(ci * k + t + 1) * cols_n];
            for b in 0..n {
                let xr = &mut x[(b * c_in + ci) * len..(b * c_in + ci + 1) * len];
                let src = &row[b * l_out..(b + 1) * l_out];
                for (o, &s) in src.iter().enumerate() {
                    let i = (o * stride + t) as isize - padding as isize;
                    if i >= 0 && (i as usize) < len {
                        xr[i as usize] += s;
                    }
                }
            }
        }
    }
    x
}
