//! Patch-wise defocus scoring: expected defocus level over 84×84 tiles.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const PATCH_SIDE: usize = 84;
pub const DEFOCUS_LEVELS: usize = 11;

/// Probabilities over defocus levels 0..=10, obtained from classifier
/// logits by softmax. Level 0 is in focus.
///
/// The unnormalized exponentials are kept and divided only on demand:
/// equal logits then yield an expected level of exactly 55/11 = 5, and a
/// one-hot distribution exactly its level.
#[derive(Debug, Clone, PartialEq)]
pub struct FocusProbabilities {
    weights: [f64; DEFOCUS_LEVELS],
    sum: f64,
}

impl FocusProbabilities {
    /// Softmax over the logits. -inf logits are supported (zero
    /// probability); at least one logit must be finite.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.len() != DEFOCUS_LEVELS {
            return Err(Error::Config(format!(
                "defocus classifier must emit {DEFOCUS_LEVELS} logits, got {}",
                logits.len()
            )));
        }
        if logits.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::Config("defocus logits must not be NaN or +inf".into()));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Config("all defocus logits are -inf".into()));
        }
        let mut weights = [0.0; DEFOCUS_LEVELS];
        let mut sum = 0.0;
        for (dst, &l) in weights.iter_mut().zip(logits) {
            *dst = (l - max).exp();
            sum += *dst;
        }
        Ok(FocusProbabilities { weights, sum })
    }

    /// Normalized p(l); sums to 1 within float rounding.
    pub fn values(&self) -> [f64; DEFOCUS_LEVELS] {
        self.weights.map(|w| w / self.sum)
    }

    /// Σ l·p(l) ∈ [0,10]; lower is better focused.
    pub fn expected_level(&self) -> f64 {
        let weighted: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| l as f64 * w)
            .sum();
        weighted / self.sum
    }
}

/// Maps an 84×84 patch ([0,255] range) to one logit per defocus level.
pub trait PatchClassifier: Send + Sync {
    fn name(&self) -> &str;
    fn logits(&self, patch: &ArrayView2<f64>) -> Result<Vec<f64>>;
}

/// Bilinear resample with half-pixel-aligned sample centers; no
/// anti-aliasing.
pub fn resize_bilinear(img: &ArrayView2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = img.dim();
    let sample = |n_in: usize, n_out: usize, t: usize| -> (usize, usize, f64) {
        let scale = n_in as f64 / n_out as f64;
        let src = ((t as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, src - lo as f64)
    };
    Array2::from_shape_fn((out_h, out_w), |(j, i)| {
        let (j0, j1, fy) = sample(h, out_h, j);
        let (i0, i1, fx) = sample(w, out_w, i);
        let top = img[(j0, i0)] * (1.0 - fx) + img[(j0, i1)] * fx;
        let bot = img[(j1, i0)] * (1.0 - fx) + img[(j1, i1)] * fx;
        top * (1.0 - fy) + bot * fy
    })
}

/// Nearest positive multiple of `PATCH_SIDE`, round-half-up on the
/// multiple count.
fn snapped_dim(n: usize) -> usize {
    let multiple = ((n as f64 / PATCH_SIDE as f64) + 0.5).floor().max(1.0) as usize;
    multiple * PATCH_SIDE
}

/// The shape an image is brought to before tiling.
pub fn resized_dims(h: usize, w: usize) -> (usize, usize) {
    (snapped_dim(h), snapped_dim(w))
}

/// Resizes to the nearest multiple of 84 per dimension, tiles into
/// non-overlapping 84×84 patches (row-major), and averages the expected
/// defocus level over all patches. Range [0,10], lower = better.
pub fn microscopy_ifq(img: &ArrayView2<f64>, classifier: &dyn PatchClassifier) -> Result<f64> {
    let (h, w) = img.dim();
    if h == 0 || w == 0 {
        return Err(Error::SectionGeometry("empty image".into()));
    }
    let (th, tw) = (snapped_dim(h), snapped_dim(w));
    let resized;
    let view = if (th, tw) == (h, w) {
        img.view()
    } else {
        resized = resize_bilinear(img, th, tw);
        resized.view()
    };
    let mut sum = 0.0;
    let mut count = 0usize;
    for bj in 0..th / PATCH_SIDE {
        for bi in 0..tw / PATCH_SIDE {
            let patch = view.slice(ndarray::s![
                bj * PATCH_SIDE..(bj + 1) * PATCH_SIDE,
                bi * PATCH_SIDE..(bi + 1) * PATCH_SIDE
            ]);
            let logits = classifier.logits(&patch)?;
            sum += FocusProbabilities::from_logits(&logits)?.expected_level();
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

/// Deterministic stand-in for the patch-level defocus CNN: buckets the
/// variance of the 3×3 Laplacian response into the 11 levels. Not the
/// cited classifier — a calibrated surrogate for offline testing.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianSurrogate {
    /// Descending variance thresholds; response above `thresholds[k]`
    /// classifies as level k, below all of them as level 10.
    pub thresholds: [f64; DEFOCUS_LEVELS - 1],
}

impl Default for LaplacianSurrogate {
    fn default() -> Self {
        // Log-spaced over the variance range measured on 84x84 sections of
        // the synthetic phantom suite at [0,255] scale: sharp sections sit
        // near p50~55..90 (max ~300), blurred-and-noisy ones near p50~25..35.
        let mut thresholds = [0.0; DEFOCUS_LEVELS - 1];
        let (lo, hi) = (2.0f64, 500.0f64);
        for (k, t) in thresholds.iter_mut().enumerate() {
            let frac = 1.0 - k as f64 / (DEFOCUS_LEVELS - 2) as f64;
            *t = lo * (hi / lo).powf(frac);
        }
        LaplacianSurrogate { thresholds }
    }
}

impl LaplacianSurrogate {
    pub fn level_of(&self, patch: &ArrayView2<f64>) -> usize {
        let (h, w) = patch.dim();
        let mut sum = 0.0;
        let mut sq = 0.0;
        let mut n = 0.0;
        for j in 1..h.saturating_sub(1) {
            for i in 1..w.saturating_sub(1) {
                let lap = 4.0 * patch[(j, i)]
                    - patch[(j - 1, i)]
                    - patch[(j + 1, i)]
                    - patch[(j, i - 1)]
                    - patch[(j, i + 1)];
                sum += lap;
                sq += lap * lap;
                n += 1.0;
            }
        }
        if n == 0.0 {
            return DEFOCUS_LEVELS - 1;
        }
        let var = (sq / n - (sum / n).powi(2)).max(0.0);
        self.thresholds
            .iter()
            .position(|t| var >= *t)
            .unwrap_or(DEFOCUS_LEVELS - 1)
    }
}

impl PatchClassifier for LaplacianSurrogate {
    fn name(&self) -> &str {
        "ifq-surrogate"
    }

    /// One-hot logits: probability mass lands entirely on the bucketed
    /// level.
    fn logits(&self, patch: &ArrayView2<f64>) -> Result<Vec<f64>> {
        let level = self.level_of(patch);
        Ok((0..DEFOCUS_LEVELS)
            .map(|l| if l == level { 0.0 } else { f64::NEG_INFINITY })
            .collect())
    }
}
