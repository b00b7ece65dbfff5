//! Window unfolding shared by convolution and transposed convolution.
//!
//! `im2col` turns the zero-padded sliding windows of a `(C, H, W)` sample
//! into a `(C*KH*KW, OH*OW)` matrix so both convolution directions reduce to
//! GEMM; `col2im` is its adjoint (scatter-add). Transposed convolution is
//! the same geometry with the roles of the two spatial grids swapped, so the
//! pair also serves as its forward and backward.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use super::Scalar;

/// Output extent of a zero-padded strided convolution along one axis
/// (floor semantics). `None` when the padded input is smaller than the
/// kernel.
pub fn conv_out_dim(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    if padded < k {
        None
    } else {
        Some((padded - k) / stride + 1)
    }
}

/// Valid output-column range `[lo, hi)` along one axis: the `o` for which
/// `o*stride + tap - pad` lands inside `[0, n)`.
fn tap_range(n: usize, o_extent: usize, stride: usize, pad: usize, tap: usize) -> (usize, usize) {
    let lo = if pad > tap {
        (pad - tap).div_ceil(stride)
    } else {
        0
    };
    let hi = if n + pad > tap {
        (((n + pad - tap - 1) / stride) + 1).min(o_extent)
    } else {
        0
    };
    (lo, hi.max(lo))
}

/// Unfolds `x` into convolution columns: row `(c*KH + u)*KW + v`, column
/// `oi*OW + oj`, value `x[c, oi*stride + u - pad, oj*stride + v - pad]`
/// (zero outside the image).
pub fn im2col<S: Scalar>(
    x: &ArrayView3<'_, S>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_hw: (usize, usize),
) -> Array2<S> {
    let (c, h, w) = x.dim();
    let (oh, ow) = out_hw;
    let mut cols = Array2::zeros((c * kh * kw, oh * ow));
    for ci in 0..c {
        for u in 0..kh {
            let (oi_lo, oi_hi) = tap_range(h, oh, stride, pad, u);
            for v in 0..kw {
                let row = (ci * kh + u) * kw + v;
                let (oj_lo, oj_hi) = tap_range(w, ow, stride, pad, v);
                let mut cols_row = cols.row_mut(row);
                for oi in oi_lo..oi_hi {
                    let ii = oi * stride + u - pad;
                    for oj in oj_lo..oj_hi {
                        let jj = oj * stride + v - pad;
                        cols_row[oi * ow + oj] = x[(ci, ii, jj)];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds columns back onto a `(C, H, W)`
/// grid. Contributions that fall outside the grid are dropped, which is
/// exactly the transposed-convolution cropping rule.
pub fn col2im<S: Scalar>(
    cols: &ArrayView2<'_, S>,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    target_hw: (usize, usize),
    cols_hw: (usize, usize),
) -> Array3<S> {
    let (h, w) = target_hw;
    let (oh, ow) = cols_hw;
    let rows = cols.nrows();
    debug_assert_eq!(rows % (kh * kw), 0);
    debug_assert_eq!(cols.ncols(), oh * ow);
    let c = rows / (kh * kw);
    let mut x = Array3::zeros((c, h, w));
    for ci in 0..c {
        for u in 0..kh {
            let (oi_lo, oi_hi) = tap_range(h, oh, stride, pad, u);
            for v in 0..kw {
                let row = (ci * kh + u) * kw + v;
                let (oj_lo, oj_hi) = tap_range(w, ow, stride, pad, v);
                let cols_row = cols.row(row);
                for oi in oi_lo..oi_hi {
                    let ii = oi * stride + u - pad;
                    for oj in oj_lo..oj_hi {
                        let jj = oj * stride + v - pad;
                        x[(ci, ii, jj)] += cols_row[oi * ow + oj];
                    }
                }
            }
        }
    }
    x
}
