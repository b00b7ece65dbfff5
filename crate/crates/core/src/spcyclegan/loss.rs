//! Loss terms and their hand-written gradients.
//!
//! Every scalar loss here has a matching `*_grad` producing d(loss)/d(input)
//! with the identical normalization, so backward passes can be assembled
//! without an expression graph.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::models::SpCycleGanModels;
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::nn::{Feat, Scalar};

/// Floor for probabilities inside logarithms.
const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanMode {
    /// Squared error against 1/0 targets on raw discriminator scores.
    LeastSquares,
    /// Binary cross-entropy on sigmoid probabilities.
    LogVanilla,
}

impl fmt::Display for GanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GanMode::LeastSquares => "least_squares",
            GanMode::LogVanilla => "log_vanilla",
        })
    }
}

impl FromStr for GanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "least_squares" => Ok(GanMode::LeastSquares),
            "log_vanilla" => Ok(GanMode::LogVanilla),
            other => Err(Error::Config(format!(
                "unknown gan mode {other:?}; expected least_squares or log_vanilla"
            ))),
        }
    }
}

/// Per-step loss values; `total` is always assembled from the other four
/// fields by [`LossBreakdown::from_terms`] so the decomposition identity
/// holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub gan_ab: f64,
    pub gan_ba: f64,
    pub cyc: f64,
    pub spatial: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_terms(gan_ab: f64, gan_ba: f64, cyc: f64, spatial: f64, lambda1: f64, lambda2: f64) -> Self {
        LossBreakdown {
            gan_ab,
            gan_ba,
            cyc,
            spatial,
            total: gan_ab + gan_ba + lambda1 * cyc + lambda2 * spatial,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.gan_ab.is_finite()
            && self.gan_ba.is_finite()
            && self.cyc.is_finite()
            && self.spatial.is_finite()
            && self.total.is_finite()
    }
}

fn ensure_finite<S: Scalar>(x: &Feat<S>, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence(format!("{what} contains non-finite values")))
    }
}

fn ensure_same_shape<S: Scalar>(x: &Feat<S>, y: &Feat<S>) -> Result<()> {
    if x.dim() == y.dim() {
        Ok(())
    } else {
        Err(Error::Net(format!(
            "shape mismatch in loss: {:?} vs {:?}",
            x.dim(),
            y.dim()
        )))
    }
}

fn count<S: Scalar>(x: &Feat<S>) -> S {
    S::from_f64c(x.len() as f64)
}

/// Generator-side adversarial loss: how far the fake scores sit from the
/// "real" target, averaged over the score map.
pub fn gan_loss_generator<S: Scalar>(d_fake: &Feat<S>, mode: GanMode) -> Result<S> {
    ensure_finite(d_fake, "discriminator output")?;
    let n = count(d_fake);
    let eps = S::from_f64c(LOG_EPS);
    Ok(match mode {
        GanMode::LeastSquares => {
            d_fake.fold(S::zero(), |acc, &d| {
                let e = d - S::one();
                acc + e * e
            }) / n
        }
        GanMode::LogVanilla => {
            d_fake.fold(S::zero(), |acc, &d| acc - d.max(eps).ln()) / n
        }
    })
}

/// d(gan_loss_generator)/d(d_fake), same normalization as the loss.
pub fn gan_loss_generator_grad<S: Scalar>(d_fake: &Feat<S>, mode: GanMode) -> Feat<S> {
    let n = count(d_fake);
    let eps = S::from_f64c(LOG_EPS);
    let two = S::from_f64c(2.0);
    match mode {
        GanMode::LeastSquares => d_fake.mapv(|d| two * (d - S::one()) / n),
        GanMode::LogVanilla => d_fake.mapv(|d| -S::one() / (n * d.max(eps))),
    }
}

/// Discriminator loss: real scores pulled to 1, fake scores to 0, averaged
/// over all entries of both maps together.
pub fn gan_loss_discriminator<S: Scalar>(
    d_real: &Feat<S>,
    d_fake: &Feat<S>,
    mode: GanMode,
) -> Result<S> {
    ensure_finite(d_real, "discriminator output")?;
    ensure_finite(d_fake, "discriminator output")?;
    let n = count(d_real) + count(d_fake);
    let eps = S::from_f64c(LOG_EPS);
    Ok(match mode {
        GanMode::LeastSquares => {
            let real = d_real.fold(S::zero(), |acc, &d| {
                let e = d - S::one();
                acc + e * e
            });
            let fake = d_fake.fold(S::zero(), |acc, &d| acc + d * d);
            (real + fake) / n
        }
        GanMode::LogVanilla => {
            let real = d_real.fold(S::zero(), |acc, &d| acc - d.max(eps).ln());
            let fake = d_fake.fold(S::zero(), |acc, &d| acc - (S::one() - d).max(eps).ln());
            (real + fake) / n
        }
    })
}

/// Gradients of [`gan_loss_discriminator`] with respect to both score maps.
pub fn gan_loss_discriminator_grads<S: Scalar>(
    d_real: &Feat<S>,
    d_fake: &Feat<S>,
    mode: GanMode,
) -> (Feat<S>, Feat<S>) {
    let n = count(d_real) + count(d_fake);
    let eps = S::from_f64c(LOG_EPS);
    let two = S::from_f64c(2.0);
    match mode {
        GanMode::LeastSquares => (
            d_real.mapv(|d| two * (d - S::one()) / n),
            d_fake.mapv(|d| two * d / n),
        ),
        GanMode::LogVanilla => (
            d_real.mapv(|d| -S::one() / (n * d.max(eps))),
            d_fake.mapv(|d| S::one() / (n * (S::one() - d).max(eps))),
        ),
    }
}

/// Mean absolute error over all elements.
pub fn l1_mean<S: Scalar>(x: &Feat<S>, y: &Feat<S>) -> Result<S> {
    ensure_same_shape(x, y)?;
    let n = count(x);
    Ok(x.iter()
        .zip(y.iter())
        .fold(S::zero(), |acc, (&a, &b)| acc + (a - b).abs())
        / n)
}

/// d(l1_mean)/dx: sign(x - y)/n, with sign(0) = 0.
pub fn l1_grad<S: Scalar>(x: &Feat<S>, y: &Feat<S>) -> Feat<S> {
    let n = count(x);
    let mut g = x.clone();
    ndarray::Zip::from(&mut g).and(y).for_each(|gv, &yv| {
        let d = *gv - yv;
        *gv = if d > S::zero() {
            S::one() / n
        } else if d < S::zero() {
            -S::one() / n
        } else {
            S::zero()
        };
    });
    g
}

/// Mean squared error over all elements.
pub fn mse<S: Scalar>(x: &Feat<S>, y: &Feat<S>) -> Result<S> {
    ensure_same_shape(x, y)?;
    let n = count(x);
    Ok(x.iter()
        .zip(y.iter())
        .fold(S::zero(), |acc, (&a, &b)| {
            let d = a - b;
            acc + d * d
        })
        / n)
}

/// d(mse)/dx: 2(x - y)/n.
pub fn mse_grad<S: Scalar>(x: &Feat<S>, y: &Feat<S>) -> Feat<S> {
    let n = count(x);
    let two = S::from_f64c(2.0);
    let mut g = x.clone();
    ndarray::Zip::from(&mut g).and(y).for_each(|gv, &yv| {
        *gv = two * (*gv - yv) / n;
    });
    g
}

/// Both reconstruction directions, each a per-element mean, summed:
/// `L1(G_BA(G_AB(a)), a) + L1(G_AB(G_BA(b)), b)`.
pub fn cycle_loss<S: Scalar>(a: &Feat<S>, b: &Feat<S>, m: &SpCycleGanModels<S>) -> Result<S> {
    let rec_a = m.g_ba.infer(m.g_ab.infer(a.clone())?)?;
    let rec_b = m.g_ab.infer(m.g_ba.infer(b.clone())?)?;
    Ok(l1_mean(&rec_a, a)? + l1_mean(&rec_b, b)?)
}

/// Mean squared error between `H(G_AB(a))` and `a`.
pub fn spatial_loss<S: Scalar>(a: &Feat<S>, m: &SpCycleGanModels<S>) -> Result<S> {
    let h_out = m.h.infer(m.g_ab.infer(a.clone())?)?;
    mse(&h_out, a)
}

/// Full generator objective on one batch pair, without touching gradients.
pub fn total_loss<S: Scalar>(
    a: &Feat<S>,
    b: &Feat<S>,
    m: &SpCycleGanModels<S>,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let fake_b = m.g_ab.infer(a.clone())?;
    let rec_a = m.g_ba.infer(fake_b.clone())?;
    let fake_a = m.g_ba.infer(b.clone())?;
    let rec_b = m.g_ab.infer(fake_a.clone())?;
    let gan_ab = gan_loss_generator(&m.d_b.infer(fake_b.clone())?, cfg.gan_mode)?;
    let gan_ba = gan_loss_generator(&m.d_a.infer(fake_a)?, cfg.gan_mode)?;
    let cyc = l1_mean(&rec_a, a)? + l1_mean(&rec_b, b)?;
    let spatial = mse(&m.h.infer(fake_b)?, a)?;
    Ok(LossBreakdown::from_terms(
        gan_ab.to_f64c(),
        gan_ba.to_f64c(),
        cyc.to_f64c(),
        spatial.to_f64c(),
        cfg.lambda1,
        cfg.lambda2,
    ))
}
