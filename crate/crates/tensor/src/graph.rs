//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! Nodes are appended after their inputs, so walking the tape backwards is a
//! valid reverse topological order.

use crate::error::{Result, TensorError};
use crate::kernels::{self, ConvGeom};
use crate::{Scalar, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRowBias(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor<T>),
    Scale(Var, T),
    Relu(Var),
    Conv2d { input: Var, kernel: Var, bias: Var, geom: ConvGeom },
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, inv_std: Vec<T> },
    L2NormalizeRows { x: Var, norms: Vec<T> },
    LnClamped { x: Var, floor: T },
    Sum(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    Reshape(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Recording of a forward computation.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of `var`, or `None` when the output does not depend on it.
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose2()?;
        Ok(self.push(value, Op::Transpose(a), &[a]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    /// Adds a vector of length `last_dim` to every row of `x`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap_or(&0);
        if self.shape(bias) != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_row_bias",
                left: self.shape(x).to_vec(),
                right: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias).data().to_vec();
        let mut value = self.value(x).clone();
        for row in value.data_mut().chunks_mut(n) {
            for (v, &bv) in row.iter_mut().zip(&b) {
                *v = *v + bv;
            }
        }
        Ok(self.push(value, Op::AddRowBias(x, bias), &[x, bias]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(self.shape(a), data)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// Element-wise product with a constant tensor.
    pub fn mul_const(&mut self, a: Var, c: Tensor<T>) -> Result<Var> {
        if self.shape(a) != c.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul_const",
                left: self.shape(a).to_vec(),
                right: c.shape().to_vec(),
            });
        }
        let data = self.value(a).data().iter().zip(c.data()).map(|(&x, &y)| x * y).collect();
        let value = Tensor::new(self.shape(a), data)?;
        Ok(self.push(value, Op::MulConst(a, c), &[a]))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let value = self.value(a).map(|v| v * s);
        self.push(value, Op::Scale(a, s), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push(value, Op::Relu(a), &[a])
    }

    /// Cross-correlation of a `C_in×H×W` input with a `C_out×C_in×k×k` kernel
    /// plus a per-output-channel bias.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, padding: usize) -> Result<Var> {
        let (c_in, h, w) = self.value(input).dims3()?;
        let ks = self.shape(kernel).to_vec();
        let mismatch = || TensorError::ShapeMismatch {
            op: "conv2d",
            left: vec![c_in, h, w],
            right: ks.clone(),
        };
        let [c_out, kc, k, k2] = ks[..] else { return Err(mismatch()) };
        if kc != c_in || k != k2 || k == 0 {
            return Err(mismatch());
        }
        if self.shape(bias) != [c_out] {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d bias",
                left: vec![c_out],
                right: self.shape(bias).to_vec(),
            });
        }
        if h + 2 * padding < k || w + 2 * padding < k {
            return Err(TensorError::Dimension(format!(
                "conv2d kernel {k}x{k} larger than padded input {}x{}",
                h + 2 * padding,
                w + 2 * padding
            )));
        }
        let geom = ConvGeom {
            c_in,
            h,
            w,
            c_out,
            k,
            pad: padding,
            out_h: h + 2 * padding - k + 1,
            out_w: w + 2 * padding - k + 1,
        };
        let mut out = vec![T::zero(); c_out * geom.out_h * geom.out_w];
        kernels::conv2d_forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
            &mut out,
        );
        let value = Tensor::new(&[c_out, geom.out_h, geom.out_w], out)?;
        Ok(self.push(value, Op::Conv2d { input, kernel, bias, geom }, &[input, kernel, bias]))
    }

    /// Softmax along `axis` (max-subtracted).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(TensorError::Dimension(format!("softmax over empty axis {axis} of {shape:?}")));
        }
        let (outer, n, inner) = kernels::axis_split(&shape, axis);
        let mut out = vec![T::zero(); self.value(x).len()];
        kernels::softmax_forward(self.value(x).data(), &mut out, outer, n, inner);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::Softmax { x, axis }, &[x]))
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap_or(&0);
        if d == 0 {
            return Err(TensorError::Dimension("layer_norm over empty axis".into()));
        }
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                left: shape,
                right: self.shape(gamma).to_vec(),
            });
        }
        let dn = T::from_usize(d).unwrap();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let xs = self.value(x).data();
        let rows = xs.len() / d;
        let mut xhat = vec![T::zero(); xs.len()];
        let mut inv_std = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xs.len()];
        for r in 0..rows {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let inv = T::one() / (var + eps).sqrt();
            inv_std[r] = inv;
            for c in 0..d {
                let xh = (row[c] - mean) * inv;
                xhat[r * d + c] = xh;
                out[r * d + c] = g[c] * xh + b[c];
            }
        }
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta]))
    }

    /// Scales every row of a 2-D tensor to unit Euclidean norm.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        let xs = self.value(x).data();
        let mut norms = Vec::with_capacity(rows);
        let mut out = vec![T::zero(); rows * cols];
        for r in 0..rows {
            let row = &xs[r * cols..(r + 1) * cols];
            let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm == T::zero() {
                return Err(TensorError::Dimension(format!("row {r} has zero norm")));
            }
            norms.push(norm);
            for c in 0..cols {
                out[r * cols + c] = row[c] / norm;
            }
        }
        let value = Tensor::new(&[rows, cols], out)?;
        Ok(self.push(value, Op::L2NormalizeRows { x, norms }, &[x]))
    }

    /// Natural log of `max(x, floor)`; zero gradient where the floor applies.
    pub fn ln_clamped(&mut self, x: Var, floor: T) -> Var {
        let value = self.value(x).map(|v| v.max(floor).ln());
        self.push(value, Op::LnClamped { x, floor }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x), &[x])
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2()?;
        if start + len > cols {
            return Err(TensorError::Dimension(format!(
                "column slice {start}..{} out of range for {cols} columns",
                start + len
            )));
        }
        let xs = self.value(x).data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xs[r * cols + start..r * cols + start + len]);
        }
        let value = Tensor::new(&[rows, len], out)?;
        Ok(self.push(value, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::Dimension("concat of zero tensors".into()));
        };
        let rows = self.value(first).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape(first).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &c) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * c..(r + 1) * c]);
            }
        }
        let value = Tensor::new(&[rows, total], out)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// Reverse pass from a single-element `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        let out_node = &self.nodes[output.0];
        if out_node.value.len() != 1 {
            return Err(TensorError::NonScalarOutput(out_node.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::ones(out_node.value.shape()));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else { continue };
            self.backward_node(idx, &gy, &mut grads)?;
            grads[idx] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) -> Result<()> {
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn backward_node(&self, idx: usize, gy: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.value(a).dims2()?;
                let n = self.value(b).dims2()?.1;
                if self.wants(a) {
                    let mut ga = vec![T::zero(); m * k];
                    kernels::gemm_nt_acc(gy.data(), self.value(b).data(), &mut ga, m, n, k);
                    self.accumulate(grads, a, Tensor::new(&[m, k], ga)?)?;
                }
                if self.wants(b) {
                    let mut gb = vec![T::zero(); k * n];
                    kernels::gemm_tn_acc(self.value(a).data(), gy.data(), &mut gb, m, k, n);
                    self.accumulate(grads, b, Tensor::new(&[k, n], gb)?)?;
                }
            }
            &Op::Transpose(a) => {
                if self.wants(a) {
                    self.accumulate(grads, a, gy.transpose2()?)?;
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if self.wants(v) {
                        self.accumulate(grads, v, gy.clone())?;
                    }
                }
            }
            &Op::AddRowBias(x, bias) => {
                if self.wants(x) {
                    self.accumulate(grads, x, gy.clone())?;
                }
                if self.wants(bias) {
                    let n = self.value(bias).len();
                    let mut gb = vec![T::zero(); n];
                    for row in gy.data().chunks(n) {
                        for (g, &v) in gb.iter_mut().zip(row) {
                            *g = *g + v;
                        }
                    }
                    self.accumulate(grads, bias, Tensor::new(&[n], gb)?)?;
                }
            }
            &Op::Mul(a, b) => {
                if self.wants(a) {
                    let d = gy.data().iter().zip(self.value(b).data()).map(|(&g, &y)| g * y).collect();
                    self.accumulate(grads, a, Tensor::new(gy.shape(), d)?)?;
                }
                if self.wants(b) {
                    let d = gy.data().iter().zip(self.value(a).data()).map(|(&g, &x)| g * x).collect();
                    self.accumulate(grads, b, Tensor::new(gy.shape(), d)?)?;
                }
            }
            Op::MulConst(a, c) => {
                if self.wants(*a) {
                    let d = gy.data().iter().zip(c.data()).map(|(&g, &y)| g * y).collect();
                    self.accumulate(grads, *a, Tensor::new(gy.shape(), d)?)?;
                }
            }
            &Op::Scale(a, s) => {
                if self.wants(a) {
                    self.accumulate(grads, a, gy.map(|g| g * s))?;
                }
            }
            &Op::Relu(a) => {
                if self.wants(a) {
                    let d = gy
                        .data()
                        .iter()
                        .zip(self.value(a).data())
                        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
                        .collect();
                    self.accumulate(grads, a, Tensor::new(gy.shape(), d)?)?;
                }
            }
            &Op::Conv2d { input, kernel, bias, geom } => {
                let mut gi = self.wants(input).then(|| vec![T::zero(); self.value(input).len()]);
                let mut gk = self.wants(kernel).then(|| vec![T::zero(); self.value(kernel).len()]);
                let mut gb = self.wants(bias).then(|| vec![T::zero(); geom.c_out]);
                kernels::conv2d_backward(
                    &geom,
                    self.value(input).data(),
                    self.value(kernel).data(),
                    gy.data(),
                    gi.as_deref_mut(),
                    gk.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                for (v, g) in [(input, gi), (kernel, gk), (bias, gb)] {
                    if let Some(g) = g {
                        let t = Tensor::new(self.shape(v), g)?;
                        self.accumulate(grads, v, t)?;
                    }
                }
            }
            &Op::Softmax { x, axis } => {
                if self.wants(x) {
                    let (outer, n, inner) = kernels::axis_split(node.value.shape(), axis);
                    let mut gx = vec![T::zero(); node.value.len()];
                    kernels::softmax_backward(node.value.data(), gy.data(), &mut gx, outer, n, inner);
                    self.accumulate(grads, x, Tensor::new(node.value.shape(), gx)?)?;
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let d = self.value(*gamma).len();
                let dn = T::from_usize(d).unwrap();
                let gvals = self.value(*gamma).data();
                let gyd = gy.data();
                if self.wants(*x) {
                    let mut gx = vec![T::zero(); gyd.len()];
                    for (r, &inv) in inv_std.iter().enumerate() {
                        let span = r * d..(r + 1) * d;
                        let dxhat: Vec<T> = gyd[span.clone()].iter().zip(gvals).map(|(&g, &w)| g * w).collect();
                        let sum_d: T = dxhat.iter().copied().sum();
                        let sum_dx: T = dxhat.iter().zip(&xhat[span.clone()]).map(|(&a, &b)| a * b).sum();
                        for c in 0..d {
                            let xh = xhat[r * d + c];
                            gx[r * d + c] = inv / dn * (dn * dxhat[c] - sum_d - xh * sum_dx);
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(gy.shape(), gx)?)?;
                }
                if self.wants(*gamma) {
                    let mut gg = vec![T::zero(); d];
                    for (row_g, row_x) in gyd.chunks(d).zip(xhat.chunks(d)) {
                        for c in 0..d {
                            gg[c] = gg[c] + row_g[c] * row_x[c];
                        }
                    }
                    self.accumulate(grads, *gamma, Tensor::new(&[d], gg)?)?;
                }
                if self.wants(*beta) {
                    let mut gb = vec![T::zero(); d];
                    for row in gyd.chunks(d) {
                        for c in 0..d {
                            gb[c] = gb[c] + row[c];
                        }
                    }
                    self.accumulate(grads, *beta, Tensor::new(&[d], gb)?)?;
                }
            }
            Op::L2NormalizeRows { x, norms } => {
                if self.wants(*x) {
                    let (rows, cols) = node.value.dims2()?;
                    let y = node.value.data();
                    let gyd = gy.data();
                    let mut gx = vec![T::zero(); rows * cols];
                    for (r, &norm) in norms.iter().enumerate().take(rows) {
                        let span = r * cols..(r + 1) * cols;
                        let dot: T = y[span.clone()].iter().zip(&gyd[span.clone()]).map(|(&a, &b)| a * b).sum();
                        for c in span {
                            gx[c] = (gyd[c] - y[c] * dot) / norm;
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(&[rows, cols], gx)?)?;
                }
            }
            &Op::LnClamped { x, floor } => {
                if self.wants(x) {
                    let d = gy
                        .data()
                        .iter()
                        .zip(self.value(x).data())
                        .map(|(&g, &v)| if v > floor { g / v } else { T::zero() })
                        .collect();
                    self.accumulate(grads, x, Tensor::new(gy.shape(), d)?)?;
                }
            }
            &Op::Sum(x) => {
                if self.wants(x) {
                    let g = gy.data()[0];
                    self.accumulate(grads, x, Tensor::full(self.shape(x), g))?;
                }
            }
            &Op::SliceCols { x, start } => {
                if self.wants(x) {
                    let (rows, cols) = self.value(x).dims2()?;
                    let len = gy.dims2()?.1;
                    let mut gx = vec![T::zero(); rows * cols];
                    for r in 0..rows {
                        gx[r * cols + start..r * cols + start + len]
                            .copy_from_slice(&gy.data()[r * len..(r + 1) * len]);
                    }
                    self.accumulate(grads, x, Tensor::new(&[rows, cols], gx)?)?;
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = gy.dims2()?;
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).dims2()?.1;
                    if self.wants(p) {
                        let mut gp = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            gp.extend_from_slice(&gy.data()[r * total + offset..r * total + offset + c]);
                        }
                        self.accumulate(grads, p, Tensor::new(&[rows, c], gp)?)?;
                    }
                    offset += c;
                }
            }
            &Op::Reshape(x) => {
                if self.wants(x) {
                    self.accumulate(grads, x, gy.clone().reshape(self.shape(x))?)?;
                }
            }
        }
        Ok(())
    }
}
