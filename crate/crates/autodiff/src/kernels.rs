//! Slice-level kernels shared by the forward and backward passes.

use crate::real::Real;

/// Stride, zero padding and dilation of a square cross-correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
}

impl ConvGeom {
    pub const fn new(stride: usize, pad: usize, dilation: usize) -> Self {
        ConvGeom {
            stride,
            pad,
            dilation,
        }
    }

    /// Stride 1 with the padding that keeps spatial size for kernel `k`.
    pub const fn same(k: usize, dilation: usize) -> Self {
        ConvGeom {
            stride: 1,
            pad: dilation * (k / 2),
            dilation,
        }
    }

    /// Output extent along one axis, `None` when it would be non-positive.
    pub fn out_extent(&self, input: usize, k: usize) -> Option<usize> {
        let span = self.dilation * (k - 1) + 1;
        let padded = input + 2 * self.pad;
        if padded < span || self.stride == 0 {
            return None;
        }
        Some((padded - span) / self.stride + 1)
    }

    fn is_pointwise(&self, k: usize) -> bool {
        k == 1 && self.stride == 1 && self.pad == 0
    }
}

pub(crate) struct ConvDims {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvDims {
    fn rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.h_out * self.w_out
    }
}

/// Output columns `ox` whose input column `ox·stride + offset − pad` lies
/// inside `[0, w)`, as a half-open range.
fn valid_range(w: usize, w_out: usize, stride: usize, offset: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(offset).div_ceil(stride).min(w_out);
    let hi = if w + pad > offset {
        (w + pad - offset).div_ceil(stride).min(w_out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn im2col<T: Real>(input: &[T], d: &ConvDims, g: ConvGeom) -> Vec<T> {
    let (k, hw_out) = (d.k, d.cols());
    let mut cols = vec![T::zero(); d.rows() * hw_out];
    for ci in 0..d.c_in {
        let plane = &input[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * hw_out..(row + 1) * hw_out];
                let (lo, hi) = valid_range(d.w, d.w_out, g.stride, kx * g.dilation, g.pad);
                if lo == hi {
                    continue;
                }
                let ix0 = lo * g.stride + kx * g.dilation - g.pad;
                for oy in 0..d.h_out {
                    let iy = (oy * g.stride + ky * g.dilation) as isize - g.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    let dst_row = &mut dst[oy * d.w_out + lo..oy * d.w_out + hi];
                    if g.stride == 1 {
                        dst_row.copy_from_slice(&src[ix0..ix0 + (hi - lo)]);
                    } else {
                        for (j, out) in dst_row.iter_mut().enumerate() {
                            *out = src[ix0 + j * g.stride];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Real>(cols: &[T], d: &ConvDims, g: ConvGeom, grad_in: &mut [T]) {
    let (k, hw_out) = (d.k, d.cols());
    for ci in 0..d.c_in {
        let plane = &mut grad_in[ci * d.h * d.w..(ci + 1) * d.h * d.w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * hw_out..(row + 1) * hw_out];
                let (lo, hi) = valid_range(d.w, d.w_out, g.stride, kx * g.dilation, g.pad);
                if lo == hi {
                    continue;
                }
                let ix0 = lo * g.stride + kx * g.dilation - g.pad;
                for oy in 0..d.h_out {
                    let iy = (oy * g.stride + ky * g.dilation) as isize - g.pad as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * d.w..(iy as usize + 1) * d.w];
                    let src_row = &src[oy * d.w_out + lo..oy * d.w_out + hi];
                    if g.stride == 1 {
                        for (o, &v) in dst[ix0..ix0 + (hi - lo)].iter_mut().zip(src_row) {
                            *o += v;
                        }
                    } else {
                        for (j, &v) in src_row.iter().enumerate() {
                            dst[ix0 + j * g.stride] += v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(
    input: &[T],
    kernel: &[T],
    bias: Option<&[T]>,
    c_out: usize,
    d: &ConvDims,
    g: ConvGeom,
) -> Vec<T> {
    let p = d.cols();
    let mut out = vec![T::zero(); c_out * p];
    if let Some(b) = bias {
        for (co, chunk) in out.chunks_mut(p).enumerate() {
            chunk.iter_mut().for_each(|v| *v = b[co]);
        }
    }
    let r = d.rows();
    let beta = if bias.is_some() { T::one() } else { T::zero() };
    if g.is_pointwise(d.k) {
        T::gemm(c_out, r, p, T::one(), kernel, r as isize, 1, input, p as isize, 1, beta, &mut out, p as isize, 1);
    } else {
        let cols = im2col(input, d, g);
        T::gemm(c_out, r, p, T::one(), kernel, r as isize, 1, &cols, p as isize, 1, beta, &mut out, p as isize, 1);
    }
    out
}

/// Returns (grad_input, grad_kernel, grad_bias) for the requested parts.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Real>(
    input: &[T],
    kernel: &[T],
    grad_out: &[T],
    c_out: usize,
    d: &ConvDims,
    g: ConvGeom,
    want_input: bool,
    want_kernel: bool,
    want_bias: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Option<Vec<T>>) {
    let p = d.cols();
    let r = d.rows();
    let pointwise = g.is_pointwise(d.k);
    let cols_owned;
    let cols: &[T] = if want_kernel && !pointwise {
        cols_owned = im2col(input, d, g);
        &cols_owned
    } else {
        input
    };
    let grad_kernel = want_kernel.then(|| {
        let mut gk = vec![T::zero(); c_out * r];
        // gk[co, r] = sum_p gout[co, p] * cols[r, p]
        T::gemm(c_out, p, r, T::one(), grad_out, p as isize, 1, cols, 1, p as isize, T::zero(), &mut gk, r as isize, 1);
        gk
    });
    let grad_input = want_input.then(|| {
        // dcols[r, p] = sum_co kernel[co, r] * gout[co, p]
        let mut dcols = vec![T::zero(); r * p];
        T::gemm(r, c_out, p, T::one(), kernel, 1, r as isize, grad_out, p as isize, 1, T::zero(), &mut dcols, p as isize, 1);
        if pointwise {
            dcols
        } else {
            let mut gi = vec![T::zero(); d.c_in * d.h * d.w];
            col2im(&dcols, d, g, &mut gi);
            gi
        }
    });
    let grad_bias = want_bias.then(|| grad_out.chunks(p).map(|c| c.iter().copied().sum()).collect());
    (grad_input, grad_kernel, grad_bias)
}

/// Bucket bounds of adaptive 1D average pooling: `[floor(j·L/n), ceil((j+1)·L/n))`.
pub fn adaptive_bucket(j: usize, len: usize, out: usize) -> (usize, usize) {
    let start = j * len / out;
    let end = ((j + 1) * len).div_ceil(out);
    (start, end)
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
