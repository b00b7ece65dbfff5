//! Natural-scene-statistics features and the kernel regressor scoring them.

use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{Error, Result};

use super::dist::{fit_aggd, fit_ggd};
use super::mscn::{half_resolution, mscn_coefficients, neighbor_products};

pub const FEATURE_DIM: usize = 36;

#[derive(Debug, Clone, PartialEq)]
pub struct BrisqueFeatures {
    pub values: [f64; FEATURE_DIM],
    /// Set when any scale had to fall back to the variance floor
    /// (effectively constant input).
    pub degenerate: bool,
}

/// 18 features per scale: GGD (shape, variance) of the MSCN field, then
/// AGGD (shape, mean, left variance, right variance) for each of the four
/// neighbor products.
pub fn brisque_features(img: &ArrayView2<f64>) -> Result<BrisqueFeatures> {
    let mut values = [0.0; FEATURE_DIM];
    let mut degenerate = false;
    let mut write = 0;

    let half = half_resolution(img);
    for scale in [img.view(), half.view()] {
        let mscn = mscn_coefficients(&scale)?;
        let flat: Vec<f64> = mscn.iter().copied().collect();
        let g = fit_ggd(&flat);
        degenerate |= g.degenerate;
        values[write] = g.shape;
        values[write + 1] = g.variance;
        write += 2;
        for products in neighbor_products(&mscn.view()) {
            let a = fit_aggd(&products);
            degenerate |= a.degenerate;
            values[write] = a.shape;
            values[write + 1] = a.mean;
            values[write + 2] = a.left_variance;
            values[write + 3] = a.right_variance;
            write += 4;
        }
    }
    debug_assert_eq!(write, FEATURE_DIM);
    Ok(BrisqueFeatures { values, degenerate })
}

/// RBF kernel regressor with per-feature affine normalization to [-1, 1].
///
/// Plain-text model schema (`#` starts a comment, tokens are
/// whitespace-separated):
///
/// ```text
/// brisque-model 1
/// gamma <float>
/// intercept <float>
/// feature_min <36 floats>
/// feature_max <36 floats>
/// sv <coefficient> <36 floats>    # one line per support vector
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct BrisqueModel {
    pub gamma: f64,
    pub intercept: f64,
    pub feature_min: [f64; FEATURE_DIM],
    pub feature_max: [f64; FEATURE_DIM],
    pub coefficients: Vec<f64>,
    pub support_vectors: Vec<[f64; FEATURE_DIM]>,
}

fn model_err(message: impl Into<String>) -> Error {
    Error::Config(format!("brisque model: {}", message.into()))
}

impl BrisqueModel {
    pub fn parse(text: &str) -> Result<Self> {
        let mut gamma = None;
        let mut intercept = None;
        let mut feature_min = None;
        let mut feature_max = None;
        let mut coefficients = Vec::new();
        let mut support_vectors = Vec::new();
        let mut saw_magic = false;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tok = line.split_whitespace();
            let key = tok.next().expect("non-empty line has a token");
            let floats = |tok: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
                tok.map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| model_err(format!("line {}: bad number '{t}'", lineno + 1)))
                })
                .collect()
            };
            match key {
                "brisque-model" => {
                    let version = floats(tok)?;
                    if version != [1.0] {
                        return Err(model_err(format!("unsupported version {version:?}")));
                    }
                    saw_magic = true;
                }
                "gamma" => gamma = Some(take_one(floats(tok)?, lineno)?),
                "intercept" => intercept = Some(take_one(floats(tok)?, lineno)?),
                "feature_min" => feature_min = Some(take_dim(floats(tok)?, lineno)?),
                "feature_max" => feature_max = Some(take_dim(floats(tok)?, lineno)?),
                "sv" => {
                    let vals = floats(tok)?;
                    if vals.len() != FEATURE_DIM + 1 {
                        return Err(model_err(format!(
                            "line {}: sv needs 1 coefficient + {FEATURE_DIM} features, got {}",
                            lineno + 1,
                            vals.len()
                        )));
                    }
                    coefficients.push(vals[0]);
                    let mut sv = [0.0; FEATURE_DIM];
                    sv.copy_from_slice(&vals[1..]);
                    support_vectors.push(sv);
                }
                other => {
                    return Err(model_err(format!("line {}: unknown key '{other}'", lineno + 1)))
                }
            }
        }
        if !saw_magic {
            return Err(model_err("missing 'brisque-model 1' header"));
        }
        if support_vectors.is_empty() {
            return Err(model_err("no support vectors"));
        }
        Ok(BrisqueModel {
            gamma: gamma.ok_or_else(|| model_err("missing gamma"))?,
            intercept: intercept.ok_or_else(|| model_err("missing intercept"))?,
            feature_min: feature_min.ok_or_else(|| model_err("missing feature_min"))?,
            feature_max: feature_max.ok_or_else(|| model_err("missing feature_max"))?,
            coefficients,
            support_vectors,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Regressor trained on this crate's synthetic degradation suite;
    /// calibrated for relative comparisons, not cross-tool score parity.
    pub fn builtin() -> Self {
        Self::parse(include_str!("builtin_brisque.model"))
            .expect("embedded model text is well-formed")
    }

    fn normalize(&self, features: &[f64; FEATURE_DIM]) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        for i in 0..FEATURE_DIM {
            let span = self.feature_max[i] - self.feature_min[i];
            out[i] = if span.abs() < 1e-12 {
                0.0
            } else {
                2.0 * (features[i] - self.feature_min[i]) / span - 1.0
            };
        }
        out
    }

    pub fn predict(&self, features: &[f64; FEATURE_DIM]) -> f64 {
        let x = self.normalize(features);
        let mut acc = self.intercept;
        for (coef, sv) in self.coefficients.iter().zip(&self.support_vectors) {
            let dist_sq: f64 = sv.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum();
            acc += coef * (-self.gamma * dist_sq).exp();
        }
        acc.clamp(0.0, 100.0)
    }
}

fn take_one(vals: Vec<f64>, lineno: usize) -> Result<f64> {
    if vals.len() != 1 {
        return Err(model_err(format!(
            "line {}: expected exactly one value",
            lineno + 1
        )));
    }
    Ok(vals[0])
}

fn take_dim(vals: Vec<f64>, lineno: usize) -> Result<[f64; FEATURE_DIM]> {
    if vals.len() != FEATURE_DIM {
        return Err(model_err(format!(
            "line {}: expected {FEATURE_DIM} values, got {}",
            lineno + 1,
            vals.len()
        )));
    }
    let mut out = [0.0; FEATURE_DIM];
    out.copy_from_slice(&vals);
    Ok(out)
}

/// Score on a [0,255]-range image: 0 best, 100 worst.
pub fn brisque_score(img: &ArrayView2<f64>, model: &BrisqueModel) -> Result<f64> {
    Ok(model.predict(&brisque_features(img)?.values))
}
