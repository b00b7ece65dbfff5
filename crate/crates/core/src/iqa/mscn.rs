//! Local mean-subtracted contrast normalization and neighbor products.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const WINDOW: usize = 7;
const SIGMA: f64 = 7.0 / 6.0;

/// Normalized 7-tap Gaussian, std 7/6, centered.
fn gaussian_taps() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as i64;
    let mut taps = [0.0; WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = (i as i64 - half) as f64;
        *t = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

fn reflect(t: i64, n: usize) -> usize {
    let n = n as i64;
    let mut t = t;
    // Mirror including the edge sample (…, 1, 0, 0, 1, …); cheap and
    // adequate for a 3-pixel apron.
    loop {
        if t < 0 {
            t = -t - 1;
        } else if t >= n {
            t = 2 * n - t - 1;
        } else {
            return t as usize;
        }
    }
}

/// Separable Gaussian filter with reflected boundaries.
fn gaussian_filter(img: &ArrayView2<f64>) -> Array2<f64> {
    let taps = gaussian_taps();
    let half = (WINDOW / 2) as i64;
    let (h, w) = img.dim();
    let mut rows = Array2::zeros((h, w));
    for j in 0..h {
        for i in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * img[(j, reflect(i as i64 + k as i64 - half, w))];
            }
            rows[(j, i)] = acc;
        }
    }
    let mut out = Array2::zeros((h, w));
    for j in 0..h {
        for i in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * rows[(reflect(j as i64 + k as i64 - half, h), i)];
            }
            out[(j, i)] = acc;
        }
    }
    out
}

/// (I − μ)/(σ + 1) with μ, σ from a 7×7 Gaussian window over a [0,255]
/// image. The +1 keeps flat regions finite: a constant image maps to zero.
pub fn mscn_coefficients(img: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let (h, w) = img.dim();
    if h < WINDOW || w < WINDOW {
        return Err(Error::SectionGeometry(format!(
            "image {w}x{h} is smaller than the {WINDOW}x{WINDOW} normalization window"
        )));
    }
    let mu = gaussian_filter(img);
    let sq = gaussian_filter(&img.mapv(|v| v * v).view());
    let mut out = Array2::zeros((h, w));
    for j in 0..h {
        for i in 0..w {
            let var = (sq[(j, i)] - mu[(j, i)] * mu[(j, i)]).max(0.0);
            out[(j, i)] = (img[(j, i)] - mu[(j, i)]) / (var.sqrt() + 1.0);
        }
    }
    Ok(out)
}

/// Products of each coefficient with its H, V, D1, D2 neighbor, in that
/// order.
pub fn neighbor_products(mscn: &ArrayView2<f64>) -> [Vec<f64>; 4] {
    let (h, w) = mscn.dim();
    let mut hp = Vec::with_capacity(h * (w - 1));
    let mut vp = Vec::with_capacity((h - 1) * w);
    let mut d1 = Vec::with_capacity((h - 1) * (w - 1));
    let mut d2 = Vec::with_capacity((h - 1) * (w - 1));
    for j in 0..h {
        for i in 0..w {
            let c = mscn[(j, i)];
            if i + 1 < w {
                hp.push(c * mscn[(j, i + 1)]);
            }
            if j + 1 < h {
                vp.push(c * mscn[(j + 1, i)]);
            }
            if j + 1 < h && i + 1 < w {
                d1.push(c * mscn[(j + 1, i + 1)]);
            }
            if j + 1 < h && i >= 1 {
                d2.push(c * mscn[(j + 1, i - 1)]);
            }
        }
    }
    [hp, vp, d1, d2]
}

/// 2×2 box average, dropping a trailing odd row/column: the half-resolution
/// scale for the feature extractor.
pub fn half_resolution(img: &ArrayView2<f64>) -> Array2<f64> {
    let (h, w) = img.dim();
    let (hh, hw) = (h / 2, w / 2);
    Array2::from_shape_fn((hh, hw), |(j, i)| {
        0.25 * (img[(2 * j, 2 * i)]
            + img[(2 * j, 2 * i + 1)]
            + img[(2 * j + 1, 2 * i)]
            + img[(2 * j + 1, 2 * i + 1)])
    })
}
