use alloc::vec::Vec;

use super::{Real, ShapeError, Tensor};

const TILE_M: usize = 4;
const TILE_N: usize = 4;

/// `out[m×n] = a[m×k] · b[k×n]` over row-major slices.
///
/// Every output element is accumulated in `f64` over `p = 0..k` in order and
/// rounded once, so the result equals a naive triple loop with an `f64`
/// accumulator bit for bit. The register tiling only changes which elements
/// are in flight together, never the summation order of any one element.
pub fn gemm<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(out.len(), m * n, "gemm: output length");

    // Columns are walked in panels of TILE_N packed contiguously as f64, so
    // the inner loop streams one short buffer instead of striding through b.
    let mut panel = alloc::vec![0.0f64; k * TILE_N];
    let mut j0 = 0;
    while j0 < n {
        let nj = TILE_N.min(n - j0);
        if nj == TILE_N {
            for p in 0..k {
                let brow = &b[p * n + j0..p * n + j0 + TILE_N];
                for l in 0..TILE_N {
                    panel[p * TILE_N + l] = brow[l].to_f64();
                }
            }
        }
        let mut i0 = 0;
        while i0 < m {
            let mi = TILE_M.min(m - i0);
            if mi == TILE_M && nj == TILE_N {
                full_tile(i0, j0, k, n, a, &panel, out);
            } else {
                edge_tile(i0, j0, mi, nj, k, n, a, b, out);
            }
            i0 += TILE_M;
        }
        j0 += TILE_N;
    }
}

#[inline(always)]
fn full_tile<T: Real>(i0: usize, j0: usize, k: usize, n: usize, a: &[T], panel: &[f64], out: &mut [T]) {
    let mut acc = [[0.0f64; TILE_N]; TILE_M];
    let rows: [&[T]; TILE_M] = core::array::from_fn(|r| &a[(i0 + r) * k..(i0 + r + 1) * k]);
    for (p, bv) in panel.chunks_exact(TILE_N).enumerate() {
        for r in 0..TILE_M {
            let av = rows[r][p].to_f64();
            for l in 0..TILE_N {
                acc[r][l] += av * bv[l];
            }
        }
    }
    for r in 0..TILE_M {
        let orow = &mut out[(i0 + r) * n + j0..(i0 + r) * n + j0 + TILE_N];
        for l in 0..TILE_N {
            orow[l] = T::from_f64(acc[r][l]);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn edge_tile<T: Real>(
    i0: usize,
    j0: usize,
    mi: usize,
    nj: usize,
    k: usize,
    n: usize,
    a: &[T],
    b: &[T],
    out: &mut [T],
) {
    for r in 0..mi {
        let arow = &a[(i0 + r) * k..(i0 + r + 1) * k];
        for l in 0..nj {
            let mut acc = 0.0f64;
            for (p, &av) in arow.iter().enumerate() {
                acc += av.to_f64() * b[p * n + j0 + l].to_f64();
            }
            out[(i0 + r) * n + j0 + l] = T::from_f64(acc);
        }
    }
}

/// `out[m×n] = a[m×k] · b[n×k]ᵀ`, both operands walked along contiguous rows.
/// Same `f64` accumulation order as [`gemm`] on an explicitly transposed `b`.
pub fn gemm_nt<T: Real>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    assert_eq!(a.len(), m * k, "gemm_nt: lhs length");
    assert_eq!(b.len(), n * k, "gemm_nt: rhs length");
    assert_eq!(out.len(), m * n, "gemm_nt: output length");
    const R: usize = 4;
    let mut i0 = 0;
    while i0 < m {
        let mi = R.min(m - i0);
        let mut j0 = 0;
        while j0 < n {
            let nj = R.min(n - j0);
            if mi == R && nj == R {
                let ar: [&[T]; R] = core::array::from_fn(|r| &a[(i0 + r) * k..(i0 + r + 1) * k]);
                let br: [&[T]; R] = core::array::from_fn(|c| &b[(j0 + c) * k..(j0 + c + 1) * k]);
                let mut acc = [[0.0f64; R]; R];
                for p in 0..k {
                    let bv: [f64; R] = core::array::from_fn(|c| br[c][p].to_f64());
                    for r in 0..R {
                        let av = ar[r][p].to_f64();
                        for c in 0..R {
                            acc[r][c] += av * bv[c];
                        }
                    }
                }
                for r in 0..R {
                    for c in 0..R {
                        out[(i0 + r) * n + j0 + c] = T::from_f64(acc[r][c]);
                    }
                }
            } else {
                for r in i0..i0 + mi {
                    for c in j0..j0 + nj {
                        let mut acc = 0.0f64;
                        for p in 0..k {
                            acc += a[r * k + p].to_f64() * b[c * k + p].to_f64();
                        }
                        out[r * n + c] = T::from_f64(acc);
                    }
                }
            }
            j0 += R;
        }
        i0 += R;
    }
}

/// Transpose of a row-major `rows×cols` slice.
pub fn transpose<T: Copy + Default>(rows: usize, cols: usize, src: &[T]) -> Vec<T> {
    assert_eq!(src.len(), rows * cols);
    let mut out = alloc::vec![T::default(); src.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

/// Matrix product of two rank-2 tensors.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, ShapeError> {
    let incompatible = || ShapeError::Incompatible {
        op: "matmul",
        left: a.dims().to_vec(),
        right: b.dims().to_vec(),
    };
    let (&[m, k], &[k2, n]) = (a.dims(), b.dims()) else {
        return Err(incompatible());
    };
    if k != k2 {
        return Err(incompatible());
    }
    let mut out = Tensor::zeros(&[m, n]);
    gemm(m, k, n, a.data(), b.data(), out.data_mut());
    Ok(out)
}
