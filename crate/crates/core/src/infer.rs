//! Per-axis restoration and weighted fusion of the three restored volumes.

use ndarray::{Array2, Array4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Net;
use crate::section::{
    crop_padded, extract_sections, pad_section, PadMode, SectionStack, SliceAxis,
};
use crate::spcyclegan::load_checkpoint;
use crate::volume::Volume;

/// Nonnegative fusion weights, normalized to sum to 1 at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct FusionWeights {
    w: [f64; 3],
}

impl Default for FusionWeights {
    fn default() -> Self {
        FusionWeights { w: [1.0 / 3.0; 3] }
    }
}

impl FusionWeights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Result<Self> {
        let raw = [w1, w2, w3];
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidWeights(format!(
                "fusion weights must be finite and nonnegative, got {raw:?}"
            )));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidWeights(
                "fusion weights must not all be zero".into(),
            ));
        }
        Ok(FusionWeights { w: [w1 / sum, w2 / sum, w3 / sum] })
    }

    pub fn w1(&self) -> f64 {
        self.w[0]
    }

    pub fn w2(&self) -> f64 {
        self.w[1]
    }

    pub fn w3(&self) -> f64 {
        self.w[2]
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.w
    }
}

impl TryFrom<[f64; 3]> for FusionWeights {
    type Error = Error;

    fn try_from(w: [f64; 3]) -> Result<Self> {
        FusionWeights::new(w[0], w[1], w[2])
    }
}

impl From<FusionWeights> for [f64; 3] {
    fn from(fw: FusionWeights) -> [f64; 3] {
        fw.w
    }
}

/// Tiled inference for sections too large to push through the generator in
/// one piece: overlapping tiles blended with a linear ramp. Not bit-exact
/// against whole-section inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileConfig {
    /// Tile side in pixels; must be a positive multiple of 4.
    pub side: usize,
    /// Blend width between neighboring tiles.
    pub overlap: usize,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig { side: 512, overlap: 32 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InferOptions {
    pub tile: Option<TileConfig>,
}

/// A trained A→B generator bound to the section axis it was trained on.
#[derive(Debug, Clone)]
pub struct AxisGenerator {
    pub net: Net<f32>,
    pub axis: SliceAxis,
}

impl AxisGenerator {
    pub fn new(net: Net<f32>, axis: SliceAxis) -> Self {
        AxisGenerator { net, axis }
    }

    /// Pulls the A→B generator and its axis tag out of a checkpoint.
    pub fn from_checkpoint(path: &std::path::Path) -> Result<Self> {
        let (models, meta, _) = load_checkpoint::<f32>(path)?;
        let axis = meta.axis.ok_or_else(|| Error::Checkpoint {
            path: path.to_owned(),
            message: "checkpoint carries no axis tag".into(),
        })?;
        Ok(AxisGenerator { net: models.g_ab, axis })
    }
}

/// Pads one section to multiples of 4 (reflecting when the content is wide
/// enough, zeros otherwise), maps [0,1] to [-1,1], runs the generator,
/// inverts the mapping with a clip to [0,1], and crops the pad back off.
fn restore_one(g: &AxisGenerator, section: &Array2<f32>, opts: &InferOptions) -> Result<Array2<f32>> {
    let (padded, rec) = match pad_section(section, 4, PadMode::Reflect) {
        Ok(out) => out,
        Err(_) => pad_section(section, 4, PadMode::Zero)?,
    };
    let (h, w) = padded.dim();

    let infer_patch = |patch: &Array2<f32>| -> Result<Array2<f32>> {
        let (ph, pw) = patch.dim();
        let mut x = Array4::zeros((1, 1, ph, pw));
        ndarray::Zip::from(&mut x.slice_mut(ndarray::s![0, 0, .., ..]))
            .and(patch)
            .for_each(|o, &v| *o = 2.0 * v - 1.0);
        let y = g.net.infer(x)?;
        if y.dim() != (1, 1, ph, pw) {
            return Err(Error::Net(format!(
                "generator changed section shape {}x{} -> {:?}",
                pw, ph, y.dim()
            )));
        }
        Ok(y.index_axis(ndarray::Axis(0), 0)
            .index_axis(ndarray::Axis(0), 0)
            .mapv(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0)))
    };

    let restored = match opts.tile {
        Some(tile) if h > tile.side || w > tile.side => {
            blend_tiles(&padded, tile, &infer_patch)?
        }
        _ => infer_patch(&padded)?,
    };
    crop_padded(&restored, &rec)
}

/// Covers `(0..n)` with `side`-long windows stepping by `side - overlap`,
/// the last one flush against the end.
fn tile_starts(n: usize, side: usize, overlap: usize) -> Vec<usize> {
    if n <= side {
        return vec![0];
    }
    let step = side - overlap;
    let mut starts: Vec<usize> = (0..).map(|k| k * step).take_while(|s| s + side < n).collect();
    starts.push(n - side);
    starts
}

/// Linear feather: weight ramps up across the first `overlap` pixels of a
/// tile edge that has a neighbor, and stays 1 elsewhere.
fn feather(len: usize, offset: usize, total: usize, overlap: usize) -> Vec<f64> {
    (0..len)
        .map(|i| {
            let mut w = 1.0f64;
            if offset > 0 && i < overlap {
                w = w.min((i + 1) as f64 / (overlap + 1) as f64);
            }
            if offset + len < total && i >= len - overlap {
                w = w.min((len - i) as f64 / (overlap + 1) as f64);
            }
            w
        })
        .collect()
}

fn blend_tiles(
    padded: &Array2<f32>,
    tile: TileConfig,
    infer_patch: &dyn Fn(&Array2<f32>) -> Result<Array2<f32>>,
) -> Result<Array2<f32>> {
    if tile.side == 0 || tile.side % 4 != 0 {
        return Err(Error::Config(format!(
            "tile side must be a positive multiple of 4, got {}",
            tile.side
        )));
    }
    if tile.overlap >= tile.side {
        return Err(Error::Config(format!(
            "tile overlap {} must be below the tile side {}",
            tile.overlap, tile.side
        )));
    }
    let (h, w) = padded.dim();
    let mut acc = Array2::<f64>::zeros((h, w));
    let mut weight = Array2::<f64>::zeros((h, w));
    for &top in &tile_starts(h, tile.side, tile.overlap) {
        for &left in &tile_starts(w, tile.side, tile.overlap) {
            let th = tile.side.min(h);
            let tw = tile.side.min(w);
            let patch = padded
                .slice(ndarray::s![top..top + th, left..left + tw])
                .to_owned();
            let out = infer_patch(&patch)?;
            let wy = feather(th, top, h, tile.overlap);
            let wx = feather(tw, left, w, tile.overlap);
            for i in 0..th {
                for j in 0..tw {
                    let wgt = wy[i] * wx[j];
                    acc[(top + i, left + j)] += wgt * out[(i, j)] as f64;
                    weight[(top + i, left + j)] += wgt;
                }
            }
        }
    }
    Ok(Array2::from_shape_fn((h, w), |(i, j)| {
        (acc[(i, j)] / weight[(i, j)]) as f32
    }))
}

/// Restores every section of `s` through `g`, preserving stack geometry.
/// Sections are independent and run in parallel; output order and values
/// do not depend on the schedule.
pub fn restore_sections_with(
    g: &AxisGenerator,
    s: &SectionStack,
    opts: &InferOptions,
) -> Result<SectionStack> {
    if g.axis != s.axis() {
        return Err(Error::AxisMismatch {
            expected: g.axis.as_str().into(),
            actual: s.axis().as_str().into(),
        });
    }
    let restored: Vec<Array2<f32>> = s
        .sections()
        .par_iter()
        .map(|section| restore_one(g, section, opts))
        .collect::<Result<_>>()?;
    SectionStack::new(s.axis(), restored, s.pad())
}

pub fn restore_sections(g: &AxisGenerator, s: &SectionStack) -> Result<SectionStack> {
    restore_sections_with(g, s, &InferOptions::default())
}

/// Slices `v` along `axis`, restores every section, and restacks to the
/// input shape.
pub fn restore_volume_axis(g: &AxisGenerator, v: &Volume, axis: SliceAxis) -> Result<Volume> {
    restore_volume_axis_with(g, v, axis, &InferOptions::default())
}

pub fn restore_volume_axis_with(
    g: &AxisGenerator,
    v: &Volume,
    axis: SliceAxis,
    opts: &InferOptions,
) -> Result<Volume> {
    let sections = extract_sections(v, axis);
    let restored = restore_sections_with(g, &sections, opts)?;
    crate::section::stack_sections(&restored, v.shape())
}

fn zero_pad_to(v: &Volume, shape: (usize, usize, usize)) -> Volume {
    let (x, y, z) = v.shape();
    if (x, y, z) == shape {
        return v.clone();
    }
    let mut out = ndarray::Array3::<f32>::zeros((shape.2, shape.1, shape.0));
    out.slice_mut(ndarray::s![..z, ..y, ..x]).assign(v.zyx());
    Volume::from_zyx(out).expect("padding preserves validity")
}

/// Voxelwise weighted sum of the three restored volumes. Zero-weight inputs
/// are skipped entirely; contributions are accumulated in f64 in sorted
/// order and clamped to the contributing inputs' range, so the sum is
/// exactly permutation-consistent, convex, and an identity on equal inputs.
/// Unequal shapes are first zero-padded to the common bounding shape.
pub fn fuse_volumes(
    v_xy: &Volume,
    v_xz: &Volume,
    v_yz: &Volume,
    w: &FusionWeights,
) -> Result<Volume> {
    let shapes = [v_xy.shape(), v_xz.shape(), v_yz.shape()];
    let common = (
        shapes.iter().map(|s| s.0).max().unwrap(),
        shapes.iter().map(|s| s.1).max().unwrap(),
        shapes.iter().map(|s| s.2).max().unwrap(),
    );
    let padded: Vec<Volume> = [v_xy, v_xz, v_yz]
        .iter()
        .map(|v| zero_pad_to(v, common))
        .collect();

    let active: Vec<(f64, &Volume)> = w
        .as_array()
        .iter()
        .zip(&padded)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, v)| (*w, v))
        .collect();

    let (cx, cy, cz) = common;
    let mut out = ndarray::Array3::<f32>::zeros((cz, cy, cx));
    let mut products = [0.0f64; 3];
    for k in 0..cz {
        for j in 0..cy {
            for i in 0..cx {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (slot, (wgt, v)) in active.iter().enumerate() {
                    let val = v.zyx()[(k, j, i)] as f64;
                    lo = lo.min(val);
                    hi = hi.max(val);
                    products[slot] = wgt * val;
                }
                let n = active.len();
                products[..n].sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
                let sum: f64 = products[..n].iter().sum();
                out[(k, j, i)] = sum.clamp(lo, hi) as f32;
            }
        }
    }
    Volume::from_zyx(out)
}
