//! Raw slice kernels shared by the forward and backward passes.

use crate::Scalar;

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
}

/// `out[m×k] += a[m×n] · b[k×n]ᵀ`
pub(crate) fn gemm_nt_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let dot: T = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
            out[i * k + p] = out[i * k + p] + dot;
        }
    }
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`
pub(crate) fn gemm_tn_acc<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Output columns `ox` for which input column `ox + kx - pad` is in range.
    fn col_range(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(kx);
        let hi = (self.w + self.pad).saturating_sub(kx).min(self.out_w);
        (lo, hi.max(lo))
    }

    fn row_range(&self, ky: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(ky);
        let hi = (self.h + self.pad).saturating_sub(ky).min(self.out_h);
        (lo, hi.max(lo))
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(
    g: &ConvGeom,
    input: &[T],
    kernel: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let plane = g.out_h * g.out_w;
    for co in 0..g.c_out {
        out[co * plane..(co + 1) * plane].fill(bias[co]);
        for ci in 0..g.c_in {
            let in_plane = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
            for ky in 0..g.k {
                let (y0, y1) = g.row_range(ky);
                for kx in 0..g.k {
                    let wv = kernel[((co * g.c_in + ci) * g.k + ky) * g.k + kx];
                    let (x0, x1) = g.col_range(kx);
                    for oy in y0..y1 {
                        let iy = oy + ky - g.pad;
                        let orow = &mut out[co * plane + oy * g.out_w..co * plane + (oy + 1) * g.out_w];
                        let irow = &in_plane[iy * g.w..(iy + 1) * g.w];
                        let ix0 = x0 + kx - g.pad;
                        for (o, &iv) in orow[x0..x1].iter_mut().zip(&irow[ix0..ix0 + (x1 - x0)]) {
                            *o = *o + wv * iv;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates gradients of a convolution into the provided buffers.
pub(crate) fn conv2d_backward<T: Scalar>(
    g: &ConvGeom,
    input: &[T],
    kernel: &[T],
    grad_out: &[T],
    grad_input: Option<&mut [T]>,
    grad_kernel: Option<&mut [T]>,
    grad_bias: Option<&mut [T]>,
) {
    let plane = g.out_h * g.out_w;
    if let Some(gb) = grad_bias {
        for co in 0..g.c_out {
            gb[co] = gb[co] + grad_out[co * plane..(co + 1) * plane].iter().copied().sum();
        }
    }
    if let Some(gk) = grad_kernel {
        for co in 0..g.c_out {
            for ci in 0..g.c_in {
                let in_plane = &input[ci * g.h * g.w..(ci + 1) * g.h * g.w];
                for ky in 0..g.k {
                    let (y0, y1) = g.row_range(ky);
                    for kx in 0..g.k {
                        let (x0, x1) = g.col_range(kx);
                        let ix0 = x0 + kx - g.pad;
                        let mut acc = T::zero();
                        for oy in y0..y1 {
                            let iy = oy + ky - g.pad;
                            let grow = &grad_out[co * plane + oy * g.out_w + x0..co * plane + oy * g.out_w + x1];
                            let irow = &in_plane[iy * g.w + ix0..iy * g.w + ix0 + (x1 - x0)];
                            acc = acc + grow.iter().zip(irow).map(|(&a, &b)| a * b).sum();
                        }
                        let idx = ((co * g.c_in + ci) * g.k + ky) * g.k + kx;
                        gk[idx] = gk[idx] + acc;
                    }
                }
            }
        }
    }
    if let Some(gi) = grad_input {
        for co in 0..g.c_out {
            for ci in 0..g.c_in {
                let gi_plane = &mut gi[ci * g.h * g.w..(ci + 1) * g.h * g.w];
                for ky in 0..g.k {
                    let (y0, y1) = g.row_range(ky);
                    for kx in 0..g.k {
                        let wv = kernel[((co * g.c_in + ci) * g.k + ky) * g.k + kx];
                        let (x0, x1) = g.col_range(kx);
                        let ix0 = x0 + kx - g.pad;
                        for oy in y0..y1 {
                            let iy = oy + ky - g.pad;
                            let grow = &grad_out[co * plane + oy * g.out_w + x0..co * plane + oy * g.out_w + x1];
                            let irow = &mut gi_plane[iy * g.w + ix0..iy * g.w + ix0 + (x1 - x0)];
                            for (o, &gv) in irow.iter_mut().zip(grow) {
                                *o = *o + wv * gv;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Splits `shape` around `axis` into `(outer, axis_len, inner)`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn softmax_forward<T: Scalar>(x: &[T], out: &mut [T], outer: usize, n: usize, inner: usize) {
    for o in 0..outer {
        for q in 0..inner {
            let base = o * n * inner + q;
            let mut max = T::neg_infinity();
            for c in 0..n {
                max = max.max(x[base + c * inner]);
            }
            let mut total = T::zero();
            for c in 0..n {
                let e = (x[base + c * inner] - max).exp();
                out[base + c * inner] = e;
                total = total + e;
            }
            for c in 0..n {
                out[base + c * inner] = out[base + c * inner] / total;
            }
        }
    }
}

pub(crate) fn softmax_backward<T: Scalar>(
    y: &[T],
    gy: &[T],
    gx: &mut [T],
    outer: usize,
    n: usize,
    inner: usize,
) {
    for o in 0..outer {
        for q in 0..inner {
            let base = o * n * inner + q;
            let mut dot = T::zero();
            for c in 0..n {
                dot = dot + y[base + c * inner] * gy[base + c * inner];
            }
            for c in 0..n {
                let i = base + c * inner;
                gx[i] = gx[i] + y[i] * (gy[i] - dot);
            }
        }
    }
}
