//! Layer kernels on channel-major activations: a `[C, N·S]` buffer holds
//! channel `c` of sample `n` at spatial index `s` in `c·N·S + n·S + s`.

use alloc::vec;
use alloc::vec::Vec;

use super::ConvGeometry;
use crate::numerics::{gemm, gemm_nt, transpose, Real};

/// NCHW batch to channel-major.
pub(crate) fn nchw_to_channel_major<T: Real>(n: usize, c: usize, area: usize, src: &[T]) -> Vec<T> {
    let mut out = vec![T::ZERO; src.len()];
    for b in 0..n {
        for ch in 0..c {
            let from = &src[(b * c + ch) * area..(b * c + ch + 1) * area];
            out[ch * n * area + b * area..ch * n * area + (b + 1) * area].copy_from_slice(from);
        }
    }
    out
}

/// Channel-major to NCHW.
#[cfg(test)]
pub(crate) fn channel_major_to_nchw<T: Real>(n: usize, c: usize, area: usize, src: &[T]) -> Vec<T> {
    let mut out = vec![T::ZERO; src.len()];
    for b in 0..n {
        for ch in 0..c {
            let from = &src[ch * n * area + b * area..ch * n * area + (b + 1) * area];
            out[(b * c + ch) * area..(b * c + ch + 1) * area].copy_from_slice(from);
        }
    }
    out
}

/// Conv output `[F, N·S]` to dense input `[F·S, N]`, feature index `f·S + s`.
pub(crate) fn flatten<T: Real>(n: usize, f: usize, area: usize, src: &[T]) -> Vec<T> {
    let mut out = vec![T::ZERO; src.len()];
    for ch in 0..f {
        for b in 0..n {
            for s in 0..area {
                out[(ch * area + s) * n + b] = src[ch * n * area + b * area + s];
            }
        }
    }
    out
}

pub(crate) fn unflatten<T: Real>(n: usize, f: usize, area: usize, src: &[T]) -> Vec<T> {
    let mut out = vec![T::ZERO; src.len()];
    for ch in 0..f {
        for b in 0..n {
            for s in 0..area {
                out[ch * n * area + b * area + s] = src[(ch * area + s) * n + b];
            }
        }
    }
    out
}

/// Patch matrix `[C·kh·kw, N·OH·OW]`.
pub(crate) fn im2col<T: Real>(g: &ConvGeometry, n: usize, x: &[T]) -> Vec<T> {
    let (ih, iw, oh, ow) = (g.in_height, g.in_width, g.out_height, g.out_width);
    let in_area = ih * iw;
    let cols_n = n * oh * ow;
    let mut cols = vec![T::ZERO; g.patch_len() * cols_n];
    for c in 0..g.in_channels {
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let dst = &mut cols[row * cols_n..(row + 1) * cols_n];
                for b in 0..n {
                    let plane = &x[c * n * in_area + b * in_area..][..in_area];
                    for oy in 0..oh {
                        let src_row = &plane[(oy * g.stride + ky) * iw..][..iw];
                        let out = &mut dst[b * oh * ow + oy * ow..][..ow];
                        for (ox, o) in out.iter_mut().enumerate() {
                            *o = src_row[ox * g.stride + kx];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input map.
pub(crate) fn col2im<T: Real>(g: &ConvGeometry, n: usize, cols: &[T]) -> Vec<T> {
    let (ih, iw, oh, ow) = (g.in_height, g.in_width, g.out_height, g.out_width);
    let in_area = ih * iw;
    let cols_n = n * oh * ow;
    let mut x = vec![T::ZERO; g.in_channels * n * in_area];
    for c in 0..g.in_channels {
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let src = &cols[row * cols_n..(row + 1) * cols_n];
                for b in 0..n {
                    let plane = &mut x[c * n * in_area + b * in_area..][..in_area];
                    for oy in 0..oh {
                        let dst_row = &mut plane[(oy * g.stride + ky) * iw..][..iw];
                        let from = &src[b * oh * ow + oy * ow..][..ow];
                        for (ox, &v) in from.iter().enumerate() {
                            dst_row[ox * g.stride + kx] += v;
                        }
                    }
                }
            }
        }
    }
    x
}

/// `y[out, cols] = w[out, inner] · x[inner, cols] + bias`.
pub(crate) fn affine<T: Real>(out_rows: usize, inner: usize, cols: usize, w: &[T], bias: &[T], x: &[T]) -> Vec<T> {
    let mut y = vec![T::ZERO; out_rows * cols];
    gemm(out_rows, inner, cols, w, x, &mut y);
    for (row, &b) in y.chunks_exact_mut(cols).zip(bias) {
        for v in row {
            *v += b;
        }
    }
    y
}

pub(crate) struct AffineGrads<T> {
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub input: Option<Vec<T>>,
}

/// Gradients of [`affine`] given upstream `dy[out, cols]`.
pub(crate) fn affine_backward<T: Real>(
    out_rows: usize,
    inner: usize,
    cols: usize,
    w: &[T],
    x: &[T],
    dy: &[T],
    need_input: bool,
) -> AffineGrads<T> {
    let mut weight = vec![T::ZERO; out_rows * inner];
    gemm_nt(out_rows, cols, inner, dy, x, &mut weight);
    let bias = dy
        .chunks_exact(cols)
        .map(|row| T::from_f64(row.iter().map(|v| v.to_f64()).sum()))
        .collect();
    let input = need_input.then(|| {
        let wt = transpose(out_rows, inner, w);
        let mut dx = vec![T::ZERO; inner * cols];
        gemm(inner, out_rows, cols, &wt, dy, &mut dx);
        dx
    });
    AffineGrads {
        weight,
        bias,
        input,
    }
}

pub(crate) struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<f64>,
}

pub(crate) struct BnStats {
    pub mean: Vec<f64>,
    /// Population variance.
    pub var: Vec<f64>,
}

/// Batch-statistics normalization over each channel row of `x[C, M]`.
pub(crate) fn batchnorm_train<T: Real>(
    channels: usize,
    m: usize,
    x: &[T],
    gamma: &[T],
    beta: &[T],
    eps: f64,
) -> (Vec<T>, BnCache<T>, BnStats) {
    let mut y = vec![T::ZERO; x.len()];
    let mut xhat = vec![T::ZERO; x.len()];
    let mut stats = BnStats {
        mean: Vec::with_capacity(channels),
        var: Vec::with_capacity(channels),
    };
    let mut inv_std = Vec::with_capacity(channels);
    for c in 0..channels {
        let row = &x[c * m..(c + 1) * m];
        let mean = row.iter().map(|v| v.to_f64()).sum::<f64>() / m as f64;
        let var = row.iter().map(|v| { let d = v.to_f64() - mean; d * d }).sum::<f64>() / m as f64;
        let inv = 1.0 / libm::sqrt(var + eps);
        let (g, b) = (gamma[c].to_f64(), beta[c].to_f64());
        for i in c * m..(c + 1) * m {
            let h = (x[i].to_f64() - mean) * inv;
            xhat[i] = T::from_f64(h);
            y[i] = T::from_f64(g * h + b);
        }
        stats.mean.push(mean);
        stats.var.push(var);
        inv_std.push(inv);
    }
    (y, BnCache { xhat, inv_std }, stats)
}

pub(crate) fn batchnorm_eval<T: Real>(
    m: usize,
    x: &mut [T],
    gamma: &[T],
    beta: &[T],
    running_mean: &[T],
    running_var: &[T],
    eps: f64,
) {
    for (c, row) in x.chunks_exact_mut(m).enumerate() {
        let inv = 1.0 / libm::sqrt(running_var[c].to_f64() + eps);
        let scale = gamma[c].to_f64() * inv;
        let shift = beta[c].to_f64() - running_mean[c].to_f64() * scale;
        for v in row {
            *v = T::from_f64(v.to_f64() * scale + shift);
        }
    }
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn batchnorm_backward<T: Real>(
    m: usize,
    cache: &BnCache<T>,
    gamma: &[T],
    dy: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let channels = gamma.len();
    let mut dx = vec![T::ZERO; dy.len()];
    let mut dgamma = Vec::with_capacity(channels);
    let mut dbeta = Vec::with_capacity(channels);
    let mf = m as f64;
    for c in 0..channels {
        let range = c * m..(c + 1) * m;
        let (mut sg, mut sb) = (0.0f64, 0.0f64);
        for i in range.clone() {
            sg += dy[i].to_f64() * cache.xhat[i].to_f64();
            sb += dy[i].to_f64();
        }
        let k = gamma[c].to_f64() * cache.inv_std[c] / mf;
        for i in range {
            dx[i] = T::from_f64(k * (mf * dy[i].to_f64() - sb - cache.xhat[i].to_f64() * sg));
        }
        dgamma.push(T::from_f64(sg));
        dbeta.push(T::from_f64(sb));
    }
    (dx, dgamma, dbeta)
}

pub(crate) fn leaky_relu<T: Real>(x: &mut [T], slope: T) {
    for v in x {
        if *v <= T::ZERO {
            *v *= slope;
        }
    }
}

/// Gradient through LeakyReLU given the pre-activation `z`; slope `α` at `z ≤ 0`.
pub(crate) fn leaky_relu_backward<T: Real>(z: &[T], dy: &mut [T], slope: T) {
    for (g, &zi) in dy.iter_mut().zip(z) {
        if zi <= T::ZERO {
            *g *= slope;
        }
    }
}
