//! Moment-matching fits for (asymmetric) generalized Gaussian coefficients.

use libm::tgamma;

/// Shape-parameter search range shared by both fits.
const ALPHA_LO: f64 = 0.2;
const ALPHA_HI: f64 = 10.0;
/// Second moments below this are treated as degenerate (constant input).
pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Bisection for a strictly monotone f on [lo, hi]; the target is clamped
/// to the attainable range first.
fn solve_monotone(f: impl Fn(f64) -> f64, target: f64, increasing: bool) -> f64 {
    let (flo, fhi) = (f(ALPHA_LO), f(ALPHA_HI));
    let (min_v, max_v) = if increasing { (flo, fhi) } else { (fhi, flo) };
    if target <= min_v {
        return if increasing { ALPHA_LO } else { ALPHA_HI };
    }
    if target >= max_v {
        return if increasing { ALPHA_HI } else { ALPHA_LO };
    }
    let (mut lo, mut hi) = (ALPHA_LO, ALPHA_HI);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgdFit {
    pub shape: f64,
    pub variance: f64,
    pub degenerate: bool,
}

/// Generalized Gaussian moment match: the ratio E[x²]/E[|x|]² identifies
/// the shape (Gaussian → π/2, Laplacian → 2).
pub fn fit_ggd(samples: &[f64]) -> GgdFit {
    let n = samples.len().max(1) as f64;
    let m2: f64 = samples.iter().map(|x| x * x).sum::<f64>() / n;
    let m1: f64 = samples.iter().map(|x| x.abs()).sum::<f64>() / n;
    let degenerate = m2 < VARIANCE_FLOOR;
    let rho = m2.max(VARIANCE_FLOOR) / (m1 * m1).max(VARIANCE_FLOOR);
    let ratio = |g: f64| tgamma(1.0 / g) * tgamma(3.0 / g) / tgamma(2.0 / g).powi(2);
    GgdFit {
        shape: solve_monotone(ratio, rho, false),
        variance: m2.max(VARIANCE_FLOOR),
        degenerate,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggdFit {
    pub shape: f64,
    pub mean: f64,
    pub left_variance: f64,
    pub right_variance: f64,
    pub degenerate: bool,
}

/// Asymmetric generalized Gaussian moment match over strictly negative /
/// strictly positive halves.
pub fn fit_aggd(samples: &[f64]) -> AggdFit {
    let mut left_sq = 0.0;
    let mut left_n = 0usize;
    let mut right_sq = 0.0;
    let mut right_n = 0usize;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for &x in samples {
        abs_sum += x.abs();
        sq_sum += x * x;
        if x < 0.0 {
            left_sq += x * x;
            left_n += 1;
        } else if x > 0.0 {
            right_sq += x * x;
            right_n += 1;
        }
    }
    let n = samples.len().max(1) as f64;
    let left_var = (left_sq / left_n.max(1) as f64).max(VARIANCE_FLOOR);
    let right_var = (right_sq / right_n.max(1) as f64).max(VARIANCE_FLOOR);
    let degenerate = sq_sum / n < VARIANCE_FLOOR || left_n == 0 || right_n == 0;

    let gamma_hat = (left_var / right_var).sqrt();
    let r_hat = (abs_sum / n).powi(2) / (sq_sum / n).max(VARIANCE_FLOOR);
    let r_norm = r_hat * (gamma_hat.powi(3) + 1.0) * (gamma_hat + 1.0)
        / (gamma_hat.powi(2) + 1.0).powi(2);
    let ratio = |a: f64| tgamma(2.0 / a).powi(2) / (tgamma(1.0 / a) * tgamma(3.0 / a));
    let shape = solve_monotone(ratio, r_norm, true);

    let scale = |var: f64| var.sqrt() * (tgamma(1.0 / shape) / tgamma(3.0 / shape)).sqrt();
    let mean = (scale(right_var) - scale(left_var)) * tgamma(2.0 / shape) / tgamma(1.0 / shape);
    AggdFit {
        shape,
        mean,
        left_variance: left_var,
        right_variance: right_var,
        degenerate,
    }
}
