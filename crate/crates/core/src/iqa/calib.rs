//! Deterministic calibration imagery and degradations for the builtin
//! quality model and its validation suite.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const BASE_SIDE: usize = 160;

/// Five structured [0,255] grayscale images covering smooth gradients,
/// oriented texture, blobs, radial patterns, and a mixed-frequency field.
pub fn base_images() -> Vec<(&'static str, Array2<f64>)> {
    let n = BASE_SIDE;
    let f = n as f64;
    let blobs = Array2::from_shape_fn((n, n), |(j, i)| {
        let centers = [(0.25, 0.3, 14.0), (0.7, 0.2, 9.0), (0.55, 0.65, 20.0), (0.2, 0.8, 11.0)];
        let mut v: f64 = 20.0;
        for (cy, cx, s) in centers {
            let dy = j as f64 - cy * f;
            let dx = i as f64 - cx * f;
            v += 220.0 * (-(dx * dx + dy * dy) / (2.0 * s * s)).exp();
        }
        v.min(255.0)
    });
    let chirp = Array2::from_shape_fn((n, n), |(j, i)| {
        let x = i as f64 / f;
        let y = j as f64 / f;
        127.5 + 100.0 * (2.0 * std::f64::consts::PI * (3.0 + 12.0 * y) * x).sin()
    });
    let ramp_texture = Array2::from_shape_fn((n, n), |(j, i)| {
        let base = 255.0 * (i + j) as f64 / (2.0 * f);
        let tex = 30.0 * ((i as f64 * 0.7).sin() * (j as f64 * 0.45).cos());
        (base + tex).clamp(0.0, 255.0)
    });
    let rings = Array2::from_shape_fn((n, n), |(j, i)| {
        let dy = j as f64 - 0.5 * f;
        let dx = i as f64 - 0.5 * f;
        let r2 = dx * dx + dy * dy;
        127.5 + 110.0 * (r2 / 180.0).sin()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let normal = Normal::new(0.0, 1.0).expect("valid std");
    let coeffs: Vec<(f64, f64, f64)> = (0..12)
        .map(|_| {
            (
                normal.sample(&mut rng) * 3.0,
                normal.sample(&mut rng) * 3.0,
                normal.sample(&mut rng),
            )
        })
        .collect();
    let field = Array2::from_shape_fn((n, n), |(j, i)| {
        let x = i as f64 / f;
        let y = j as f64 / f;
        let mut v = 0.0;
        for (kx, ky, a) in &coeffs {
            v += a * (2.0 * std::f64::consts::PI * (kx * x + ky * y)).cos();
        }
        (127.5 + 40.0 * v).clamp(0.0, 255.0)
    });
    vec![
        ("blobs", blobs),
        ("chirp", chirp),
        ("ramp-texture", ramp_texture),
        ("rings", rings),
        ("field", field),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationFamily {
    GaussianNoise,
    GaussianBlur,
    Blocking,
}

impl DegradationFamily {
    pub const ALL: [DegradationFamily; 3] = [
        DegradationFamily::GaussianNoise,
        DegradationFamily::GaussianBlur,
        DegradationFamily::Blocking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DegradationFamily::GaussianNoise => "gaussian-noise",
            DegradationFamily::GaussianBlur => "gaussian-blur",
            DegradationFamily::Blocking => "blocking",
        }
    }
}

pub fn add_gaussian_noise(img: &ArrayView2<f64>, sigma: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    img.mapv(|v| (v + normal.sample(&mut rng)).clamp(0.0, 255.0))
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

fn reflect(t: i64, n: usize) -> usize {
    let n = n as i64;
    let mut t = t;
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

/// Separable Gaussian blur, reflected boundary, kernel radius 3σ.
pub fn gaussian_blur(img: &ArrayView2<f64>, sigma: f64) -> Array2<f64> {
    let taps = gaussian_taps(sigma);
    let radius = (taps.len() / 2) as i64;
    let (h, w) = img.dim();
    let mut rows = Array2::<f64>::zeros((h, w));
    for j in 0..h {
        for i in 0..w {
            rows[(j, i)] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * img[(j, reflect(i as i64 + k as i64 - radius, w))])
                .sum();
        }
    }
    let mut out = Array2::<f64>::zeros((h, w));
    for j in 0..h {
        for i in 0..w {
            out[(j, i)] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[(reflect(j as i64 + k as i64 - radius, h), i)])
                .sum();
        }
    }
    out
}

const QUANT_TABLE: [[f64; 8]; 8] = [
    [16.0, 11.0, 10.0, 16.0, 24.0, 40.0, 51.0, 61.0],
    [12.0, 12.0, 14.0, 19.0, 26.0, 58.0, 60.0, 55.0],
    [14.0, 13.0, 16.0, 24.0, 40.0, 57.0, 69.0, 56.0],
    [14.0, 17.0, 22.0, 29.0, 51.0, 87.0, 80.0, 62.0],
    [18.0, 22.0, 37.0, 56.0, 68.0, 109.0, 103.0, 77.0],
    [24.0, 35.0, 55.0, 64.0, 81.0, 104.0, 113.0, 92.0],
    [49.0, 64.0, 78.0, 87.0, 103.0, 121.0, 120.0, 101.0],
    [72.0, 92.0, 95.0, 98.0, 112.0, 100.0, 103.0, 99.0],
];

fn dct_basis(u: usize, i: usize) -> f64 {
    let c = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
    c * ((2 * i + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos()
}

/// Blocking artifacts via 8×8 DCT coefficient quantization (luminance
/// table × strength). Partial edge blocks are left untouched.
pub fn blocking(img: &ArrayView2<f64>, strength: f64) -> Array2<f64> {
    let (h, w) = img.dim();
    let mut out = img.to_owned();
    for bj in 0..h / 8 {
        for bi in 0..w / 8 {
            let mut coef = [[0.0f64; 8]; 8];
            for (u, row) in coef.iter_mut().enumerate() {
                for (v, c) in row.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for j in 0..8 {
                        for i in 0..8 {
                            acc += img[(bj * 8 + j, bi * 8 + i)]
                                * dct_basis(u, j)
                                * dct_basis(v, i);
                        }
                    }
                    let q = QUANT_TABLE[u][v] * strength;
                    *c = (acc / q).round() * q;
                }
            }
            for j in 0..8 {
                for i in 0..8 {
                    let mut acc = 0.0;
                    for (u, row) in coef.iter().enumerate() {
                        for (v, c) in row.iter().enumerate() {
                            acc += c * dct_basis(u, j) * dct_basis(v, i);
                        }
                    }
                    out[(bj * 8 + j, bi * 8 + i)] = acc.clamp(0.0, 255.0);
                }
            }
        }
    }
    out
}

/// Applies `family` at severity 1..=3; fully determined by the arguments.
pub fn degrade(
    img: &ArrayView2<f64>,
    family: DegradationFamily,
    severity: u8,
    seed: u64,
) -> Array2<f64> {
    let s = severity.clamp(1, 3) as f64;
    match family {
        DegradationFamily::GaussianNoise => add_gaussian_noise(img, 8.0 * s * s, seed),
        DegradationFamily::GaussianBlur => gaussian_blur(img, 0.8 * s),
        DegradationFamily::Blocking => blocking(img, 2.0f64.powf(s)),
    }
}
