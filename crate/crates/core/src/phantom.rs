//! Synthetic fluorescence-like phantoms: bright objects over a dim
//! background, degraded by depth-dependent blur, intensity decay, and
//! photon noise. Stand-ins for real acquisitions in desk-scale runs.

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomConfig {
    pub shape: (usize, usize, usize),
    pub ellipsoids: usize,
    pub tubes: usize,
    pub background: f32,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig {
            shape: (64, 64, 64),
            ellipsoids: 8,
            tubes: 4,
            background: 0.04,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let (x, y, z) = self.shape;
        if x == 0 || y == 0 || z == 0 {
            return Err(Error::Config(format!(
                "phantom shape must be positive, got {:?}",
                self.shape
            )));
        }
        if !(0.0..=1.0).contains(&self.background) {
            return Err(Error::Config(format!(
                "phantom background {} outside [0,1]",
                self.background
            )));
        }
        Ok(())
    }
}

/// Acquisition degradation: per-slice Gaussian blur with σ(z) linear in
/// depth, exponential intensity decay exp(−z/τ), and Poisson photon noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradeConfig {
    pub sigma_top: f64,
    pub sigma_bottom: f64,
    /// Decay constant in voxels; `None` disables decay.
    pub decay_tau: Option<f64>,
    /// Peak photon count; 0 disables noise.
    pub photons: f64,
    pub seed: u64,
}

impl Default for DegradeConfig {
    fn default() -> Self {
        DegradeConfig {
            sigma_top: 0.4,
            sigma_bottom: 2.2,
            decay_tau: Some(96.0),
            photons: 400.0,
            seed: 0,
        }
    }
}

impl DegradeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_top < 0.0 || self.sigma_bottom < 0.0 {
            return Err(Error::Config("blur sigmas must be nonnegative".into()));
        }
        if let Some(tau) = self.decay_tau {
            if !(tau > 0.0) {
                return Err(Error::Config(format!("decay tau must be positive, got {tau}")));
            }
        }
        if !(self.photons >= 0.0) {
            return Err(Error::Config("photon count must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Random axis-aligned ellipsoids and quadratic Bézier tubes, max-blended
/// over the background. Fully determined by the config.
pub fn generate_phantom(cfg: &PhantomConfig) -> Result<Volume> {
    cfg.validate()?;
    let (xs, ys, zs) = cfg.shape;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vol = Volume::from_fn(cfg.shape, |_, _, _| cfg.background)?;

    let span = xs.min(ys).min(zs) as f64;
    for _ in 0..cfg.ellipsoids {
        let c = (
            rng.random_range(0.0..xs as f64),
            rng.random_range(0.0..ys as f64),
            rng.random_range(0.0..zs as f64),
        );
        let a = (
            rng.random_range(0.06..0.18) * span,
            rng.random_range(0.06..0.18) * span,
            rng.random_range(0.06..0.18) * span,
        );
        let intensity = rng.random_range(0.55..1.0) as f32;
        splat_ellipsoid(&mut vol, c, a, intensity);
    }

    for _ in 0..cfg.tubes {
        let p: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.0..xs as f64),
                    rng.random_range(0.0..ys as f64),
                    rng.random_range(0.0..zs as f64),
                )
            })
            .collect();
        let radius = rng.random_range(0.02..0.05) * span;
        let intensity = rng.random_range(0.45..0.9) as f32;
        splat_tube(&mut vol, (p[0], p[1], p[2]), radius, intensity);
    }
    Ok(vol)
}

fn splat_ellipsoid(vol: &mut Volume, c: (f64, f64, f64), a: (f64, f64, f64), intensity: f32) {
    let (xs, ys, zs) = vol.shape();
    let lo = |c: f64, a: f64| (c - a).floor().max(0.0) as usize;
    let hi = |c: f64, a: f64, n: usize| ((c + a).ceil() as usize + 1).min(n);
    let data = vol.zyx_mut();
    for k in lo(c.2, a.2)..hi(c.2, a.2, zs) {
        for j in lo(c.1, a.1)..hi(c.1, a.1, ys) {
            for i in lo(c.0, a.0)..hi(c.0, a.0, xs) {
                let r2 = ((i as f64 - c.0) / a.0).powi(2)
                    + ((j as f64 - c.1) / a.1).powi(2)
                    + ((k as f64 - c.2) / a.2).powi(2);
                if r2 < 1.0 {
                    let v = intensity * (1.0 - r2).sqrt() as f32;
                    let cell = &mut data[(k, j, i)];
                    *cell = cell.max(v);
                }
            }
        }
    }
}

fn splat_tube(
    vol: &mut Volume,
    (p0, p1, p2): ((f64, f64, f64), (f64, f64, f64), (f64, f64, f64)),
    radius: f64,
    intensity: f32,
) {
    let bezier = |t: f64| {
        let u = 1.0 - t;
        (
            u * u * p0.0 + 2.0 * u * t * p1.0 + t * t * p2.0,
            u * u * p0.1 + 2.0 * u * t * p1.1 + t * t * p2.1,
            u * u * p0.2 + 2.0 * u * t * p1.2 + t * t * p2.2,
        )
    };
    let dist = |a: (f64, f64, f64), b: (f64, f64, f64)| {
        ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2) + (a.2 - b.2).powi(2)).sqrt()
    };
    // Chord-length estimate keeps sample spacing below half a voxel.
    let approx_len = dist(p0, p1) + dist(p1, p2);
    let steps = (2.0 * approx_len).ceil().max(2.0) as usize;

    let (xs, ys, zs) = vol.shape();
    let data = vol.zyx_mut();
    let r = radius.max(0.75);
    for s in 0..=steps {
        let (cx, cy, cz) = bezier(s as f64 / steps as f64);
        let lo = |c: f64| (c - r).floor().max(0.0) as usize;
        let hi = |c: f64, n: usize| ((c + r).ceil() as usize + 1).min(n);
        for k in lo(cz)..hi(cz, zs) {
            for j in lo(cy)..hi(cy, ys) {
                for i in lo(cx)..hi(cx, xs) {
                    let d2 = (i as f64 - cx).powi(2)
                        + (j as f64 - cy).powi(2)
                        + (k as f64 - cz).powi(2);
                    if d2 < r * r {
                        let v = intensity * (1.0 - d2 / (r * r)).sqrt() as f32;
                        let cell = &mut data[(k, j, i)];
                        *cell = cell.max(v);
                    }
                }
            }
        }
    }
}

fn gaussian_taps(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
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

fn blur_slice(slice: &Array2<f32>, sigma: f64) -> Array2<f32> {
    let taps = gaussian_taps(sigma);
    let radius = (taps.len() / 2) as i64;
    let (h, w) = slice.dim();
    let mut rows = Array2::<f32>::zeros((h, w));
    for j in 0..h {
        for i in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * slice[(j, reflect(i as i64 + k as i64 - radius, w))] as f64;
            }
            rows[(j, i)] = acc as f32;
        }
    }
    let mut out = Array2::<f32>::zeros((h, w));
    for j in 0..h {
        for i in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                acc += t * rows[(reflect(j as i64 + k as i64 - radius, h), i)] as f64;
            }
            out[(j, i)] = acc as f32;
        }
    }
    out
}

/// σ at depth z: linear between `sigma_top` (z = 0) and `sigma_bottom`
/// (z = Z−1).
pub fn sigma_at(cfg: &DegradeConfig, z: usize, depth: usize) -> f64 {
    if depth <= 1 {
        return cfg.sigma_top;
    }
    let t = z as f64 / (depth - 1) as f64;
    cfg.sigma_top + (cfg.sigma_bottom - cfg.sigma_top) * t
}

/// Applies blur, decay, and photon noise slice by slice.
pub fn degrade_volume(v: &Volume, cfg: &DegradeConfig) -> Result<Volume> {
    cfg.validate()?;
    let (xs, ys, zs) = v.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Volume::zeros((xs, ys, zs))?;
    for z in 0..zs {
        let slice = v.zyx().index_axis(ndarray::Axis(0), z).to_owned();
        let mut slice = blur_slice(&slice, sigma_at(cfg, z, zs));
        if let Some(tau) = cfg.decay_tau {
            let gain = (-(z as f64) / tau).exp() as f32;
            slice.mapv_inplace(|v| v * gain);
        }
        if cfg.photons > 0.0 {
            slice.mapv_inplace(|v| {
                let lambda = v as f64 * cfg.photons;
                if lambda <= 0.0 {
                    0.0
                } else {
                    let count = Poisson::new(lambda).expect("positive lambda").sample(&mut rng);
                    (count / cfg.photons).clamp(0.0, 1.0) as f32
                }
            });
        } else {
            slice.mapv_inplace(|v| v.clamp(0.0, 1.0));
        }
        out.zyx_mut().index_axis_mut(ndarray::Axis(0), z).assign(&slice);
    }
    Ok(out)
}

/// Intensity centroid of a section above the given floor; `None` when
/// nothing exceeds it. Used to measure object drift between an input and
/// its restoration.
pub fn intensity_centroid(img: &ndarray::ArrayView2<f32>, floor: f32) -> Option<(f64, f64)> {
    let mut mass = 0.0f64;
    let mut my = 0.0f64;
    let mut mx = 0.0f64;
    for ((j, i), &v) in img.indexed_iter() {
        let w = (v - floor).max(0.0) as f64;
        mass += w;
        my += w * j as f64;
        mx += w * i as f64;
    }
    if mass <= 0.0 {
        None
    } else {
        Some((my / mass, mx / mass))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantoms_are_deterministic_in_the_seed() {
        let cfg = PhantomConfig { shape: (24, 20, 16), seed: 9, ..PhantomConfig::default() };
        let a = generate_phantom(&cfg).unwrap();
        let b = generate_phantom(&cfg).unwrap();
        assert_eq!(a.zyx(), b.zyx());
        let c = generate_phantom(&PhantomConfig { seed: 10, ..cfg }).unwrap();
        assert!(a.zyx().iter().zip(c.zyx()).any(|(x, y)| x != y));
    }

    #[test]
    fn phantoms_stay_in_range_and_contain_objects() {
        let cfg = PhantomConfig { shape: (32, 32, 24), seed: 3, ..PhantomConfig::default() };
        let v = generate_phantom(&cfg).unwrap();
        let (lo, hi) = v
            .zyx()
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        assert!(lo >= 0.0 && hi <= 1.0);
        assert_eq!(lo, cfg.background);
        assert!(hi > 0.5, "no bright object rendered (max {hi})");
    }

    #[test]
    fn blur_gets_stronger_with_depth() {
        // Identical checkerboard content in every slice, so sharpness
        // differences come from σ(z) alone.
        let v = Volume::from_fn((48, 48, 32), |x, y, _| ((x + y) % 2) as f32).unwrap();
        let deg = degrade_volume(
            &v,
            &DegradeConfig { photons: 0.0, decay_tau: None, ..DegradeConfig::default() },
        )
        .unwrap();
        let lap_var = |z: usize| {
            let s = deg.zyx().index_axis(ndarray::Axis(0), z);
            let (h, w) = s.dim();
            let mut sum = 0.0f64;
            let mut sq = 0.0f64;
            let mut n = 0.0f64;
            for j in 1..h - 1 {
                for i in 1..w - 1 {
                    let l = 4.0 * s[(j, i)] as f64
                        - s[(j - 1, i)] as f64
                        - s[(j + 1, i)] as f64
                        - s[(j, i - 1)] as f64
                        - s[(j, i + 1)] as f64;
                    sum += l;
                    sq += l * l;
                    n += 1.0;
                }
            }
            sq / n - (sum / n).powi(2)
        };
        assert!(lap_var(0) > 2.0 * lap_var(31), "top {} bottom {}", lap_var(0), lap_var(31));
        assert_eq!(sigma_at(&DegradeConfig::default(), 0, 32), 0.4);
        assert_eq!(sigma_at(&DegradeConfig::default(), 31, 32), 2.2);
        assert_eq!(sigma_at(&DegradeConfig::default(), 5, 1), 0.4);
    }

    #[test]
    fn decay_reduces_deep_slice_intensity() {
        let v = Volume::from_fn((16, 16, 20), |_, _, _| 0.5).unwrap();
        let cfg = DegradeConfig {
            sigma_top: 0.0,
            sigma_bottom: 0.0,
            decay_tau: Some(10.0),
            photons: 0.0,
            seed: 0,
        };
        let deg = degrade_volume(&v, &cfg).unwrap();
        let mean = |z: usize| deg.zyx().index_axis(ndarray::Axis(0), z).mean().unwrap();
        assert!((mean(0) - 0.5).abs() < 1e-6);
        let expected = 0.5 * (-19.0f64 / 10.0).exp() as f32;
        assert!((mean(19) - expected).abs() < 1e-6);
    }

    #[test]
    fn photon_noise_is_seeded_and_optional() {
        let cfg = PhantomConfig { shape: (20, 20, 8), seed: 7, ..PhantomConfig::default() };
        let v = generate_phantom(&cfg).unwrap();
        let noiseless = DegradeConfig { photons: 0.0, ..DegradeConfig::default() };
        let a = degrade_volume(&v, &noiseless).unwrap();
        let b = degrade_volume(&v, &noiseless).unwrap();
        assert_eq!(a.zyx(), b.zyx());

        let noisy_cfg = DegradeConfig { photons: 200.0, ..DegradeConfig::default() };
        let n1 = degrade_volume(&v, &noisy_cfg).unwrap();
        let n2 = degrade_volume(&v, &noisy_cfg).unwrap();
        assert_eq!(n1.zyx(), n2.zyx());
        assert!(n1.zyx().iter().zip(a.zyx()).any(|(x, y)| x != y));
        let (lo, hi) = n1
            .zyx()
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        assert!(lo >= 0.0 && hi <= 1.0);
    }

    #[test]
    fn zero_intensity_voxels_survive_poisson_guard() {
        let v = Volume::zeros((8, 8, 4)).unwrap();
        let deg = degrade_volume(&v, &DegradeConfig::default()).unwrap();
        assert!(deg.zyx().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(PhantomConfig { shape: (0, 4, 4), ..PhantomConfig::default() }
            .validate()
            .is_err());
        assert!(PhantomConfig { background: 1.5, ..PhantomConfig::default() }
            .validate()
            .is_err());
        assert!(DegradeConfig { sigma_top: -1.0, ..DegradeConfig::default() }
            .validate()
            .is_err());
        assert!(DegradeConfig { decay_tau: Some(0.0), ..DegradeConfig::default() }
            .validate()
            .is_err());
        assert!(DegradeConfig { photons: f64::NAN, ..DegradeConfig::default() }
            .validate()
            .is_err());
    }

    #[test]
    fn centroid_tracks_a_bright_square() {
        let mut img = Array2::<f32>::zeros((10, 10));
        for j in 6..9 {
            for i in 2..5 {
                img[(j, i)] = 1.0;
            }
        }
        let (cy, cx) = intensity_centroid(&img.view(), 0.0).unwrap();
        assert!((cy - 7.0).abs() < 1e-9 && (cx - 3.0).abs() < 1e-9);
        assert!(intensity_centroid(&Array2::zeros((4, 4)).view(), 0.1).is_none());
    }

    #[test]
    fn single_slice_volume_degrades() {
        let v = generate_phantom(&PhantomConfig {
            shape: (16, 16, 1),
            ..PhantomConfig::default()
        })
        .unwrap();
        let deg = degrade_volume(&v, &DegradeConfig::default()).unwrap();
        assert_eq!(deg.shape(), (16, 16, 1));
    }
}
