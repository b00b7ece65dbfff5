//! Axis-aligned 2D sectioning of volumes, padding, and patch sampling.
//!
//! Sections are images: width × height, pixel `(i, j)` = (column i, row j),
//! stored as `Array2<f32>` in `(row, col) = (H, W)` order. With volume
//! storage `(Z, Y, X)`:
//! - an xy section at z=p is the `(Y, X)` slab — width X, height Y;
//! - an xz section at y=q is the `(Z, X)` slab — width X, height Z;
//! - a yz section at x=r is the `(Z, Y)` slab — width Y, height Z.
//!
//! Pixel `(i, j)` of an xz section q is voxel `(i, q, j)`, and analogously
//! for the other axes.

use ndarray::{s, Array2, Array3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::volume::Volume;

/// The three orthogonal section families. Xy sections are indexed by z,
/// xz by y, yz by x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    Xy,
    Xz,
    Yz,
}

impl SliceAxis {
    pub const ALL: [SliceAxis; 3] = [SliceAxis::Xy, SliceAxis::Xz, SliceAxis::Yz];

    pub fn as_str(self) -> &'static str {
        match self {
            SliceAxis::Xy => "xy",
            SliceAxis::Xz => "xz",
            SliceAxis::Yz => "yz",
        }
    }

    /// Section count for a volume of shape `(X, Y, Z)`.
    pub fn count_for(self, shape: (usize, usize, usize)) -> usize {
        match self {
            SliceAxis::Xy => shape.2,
            SliceAxis::Xz => shape.1,
            SliceAxis::Yz => shape.0,
        }
    }

    /// Section size `(width, height)` for a volume of shape `(X, Y, Z)`.
    pub fn section_size(self, shape: (usize, usize, usize)) -> (usize, usize) {
        match self {
            SliceAxis::Xy => (shape.0, shape.1),
            SliceAxis::Xz => (shape.0, shape.2),
            SliceAxis::Yz => (shape.1, shape.2),
        }
    }
}

impl std::str::FromStr for SliceAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xy" => Ok(SliceAxis::Xy),
            "xz" => Ok(SliceAxis::Xz),
            "yz" => Ok(SliceAxis::Yz),
            other => Err(Error::Config(format!(
                "unknown axis '{other}' (expected xy, xz, or yz)"
            ))),
        }
    }
}

impl std::fmt::Display for SliceAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    Reflect,
    Zero,
}

/// Per-side padding applied to every section of a stack. Content stays at
/// the top-left; only right and bottom are padded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadRecord {
    pub pad_right: usize,
    pub pad_bottom: usize,
    pub mode: PadMode,
}

impl PadRecord {
    pub fn none() -> Self {
        PadRecord {
            pad_right: 0,
            pad_bottom: 0,
            mode: PadMode::Zero,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.pad_right == 0 && self.pad_bottom == 0
    }
}

/// Ordered sections along one axis, all the same `(H, W)`, plus the pad
/// state shared by every section.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionStack {
    axis: SliceAxis,
    sections: Vec<Array2<f32>>,
    pad: PadRecord,
}

impl SectionStack {
    /// Builds a stack from pre-cut sections. All sections must share
    /// dimensions and the count must be ≥ 1.
    pub fn new(axis: SliceAxis, sections: Vec<Array2<f32>>, pad: PadRecord) -> Result<Self> {
        let first = sections
            .first()
            .ok_or_else(|| Error::SectionGeometry("empty section stack".into()))?
            .dim();
        if let Some(k) = sections.iter().position(|s| s.dim() != first) {
            return Err(Error::SectionGeometry(format!(
                "section {k} is {:?}, first is {first:?}",
                sections[k].dim()
            )));
        }
        Ok(SectionStack {
            axis,
            sections,
            pad,
        })
    }

    pub fn axis(&self) -> SliceAxis {
        self.axis
    }

    pub fn count(&self) -> usize {
        self.sections.len()
    }

    /// Section dimensions `(H, W)` including any padding.
    pub fn dims(&self) -> (usize, usize) {
        self.sections[0].dim()
    }

    pub fn pad(&self) -> PadRecord {
        self.pad
    }

    pub fn sections(&self) -> &[Array2<f32>] {
        &self.sections
    }

    pub fn section(&self, k: usize) -> &Array2<f32> {
        &self.sections[k]
    }
}

/// Slices `v` into its full set of sections along `axis`; pad record is
/// all-zero.
pub fn extract_sections(v: &Volume, axis: SliceAxis) -> SectionStack {
    let zyx = v.zyx();
    let count = axis.count_for(v.shape());
    let sections: Vec<Array2<f32>> = (0..count)
        .map(|k| match axis {
            SliceAxis::Xy => zyx.slice(s![k, .., ..]).to_owned(),
            SliceAxis::Xz => zyx.slice(s![.., k, ..]).to_owned(),
            SliceAxis::Yz => zyx.slice(s![.., .., k]).to_owned(),
        })
        .collect();
    SectionStack {
        axis,
        sections,
        pad: PadRecord::none(),
    }
}

/// Rebuilds a volume of `target_shape` `(X, Y, Z)` from a section stack.
/// Exact inverse of [`extract_sections`] when the pad record is zero;
/// otherwise the recorded right/bottom padding is cropped away first.
pub fn stack_sections(s: &SectionStack, target_shape: (usize, usize, usize)) -> Result<Volume> {
    let (x, y, z) = target_shape;
    let expect_count = s.axis.count_for(target_shape);
    if s.count() != expect_count {
        return Err(Error::SectionGeometry(format!(
            "{} stack has {} sections, target shape ({x}, {y}, {z}) needs {expect_count}",
            s.axis,
            s.count()
        )));
    }
    let (w, h) = s.axis.section_size(target_shape);
    let (ph, pw) = s.dims();
    let (ch, cw) = (
        ph.checked_sub(s.pad.pad_bottom),
        pw.checked_sub(s.pad.pad_right),
    );
    if ch != Some(h) || cw != Some(w) {
        return Err(Error::SectionGeometry(format!(
            "{} sections are {pw}x{ph} with pad ({}, {}); target shape needs {w}x{h}",
            s.axis, s.pad.pad_right, s.pad.pad_bottom
        )));
    }
    let mut data = Array3::zeros((z, y, x));
    for (k, sec) in s.sections.iter().enumerate() {
        let content = sec.slice(s![..h, ..w]);
        match s.axis {
            SliceAxis::Xy => data.slice_mut(s![k, .., ..]).assign(&content),
            SliceAxis::Xz => data.slice_mut(s![.., k, ..]).assign(&content),
            SliceAxis::Yz => data.slice_mut(s![.., .., k]).assign(&content),
        }
    }
    Volume::from_zyx(data)
}

/// Pads `img` on the right and bottom to the next multiples of `multiple`.
/// Content stays at the top-left.
pub fn pad_section(
    img: &Array2<f32>,
    multiple: usize,
    mode: PadMode,
) -> Result<(Array2<f32>, PadRecord)> {
    if multiple == 0 {
        return Err(Error::SectionGeometry("pad multiple must be >= 1".into()));
    }
    let (h, w) = img.dim();
    let target = |n: usize| n.div_ceil(multiple) * multiple;
    pad_section_to(img, (target(h), target(w)), mode)
}

/// Pads `img` on the right and bottom to exactly `(H, W)`.
pub fn pad_section_to(
    img: &Array2<f32>,
    target_hw: (usize, usize),
    mode: PadMode,
) -> Result<(Array2<f32>, PadRecord)> {
    let (h, w) = img.dim();
    let (th, tw) = target_hw;
    if th < h || tw < w {
        return Err(Error::SectionGeometry(format!(
            "target {tw}x{th} smaller than content {w}x{h}"
        )));
    }
    let (pb, pr) = (th - h, tw - w);
    if mode == PadMode::Reflect && (pb >= h || pr >= w) {
        return Err(Error::SectionGeometry(format!(
            "reflect padding ({pr}, {pb}) must stay below the image dims ({w}, {h})"
        )));
    }
    let mut out = Array2::zeros((th, tw));
    out.slice_mut(s![..h, ..w]).assign(img);
    if mode == PadMode::Reflect {
        // Right band reflects columns about the last column, excluding it;
        // the bottom band then reflects completed rows, so the corner is
        // reflected in both directions.
        for j in 0..h {
            for di in 0..pr {
                out[(j, w + di)] = out[(j, w - 2 - di)];
            }
        }
        for dj in 0..pb {
            for i in 0..tw {
                out[(h + dj, i)] = out[(h - 2 - dj, i)];
            }
        }
    }
    Ok((
        out,
        PadRecord {
            pad_right: pr,
            pad_bottom: pb,
            mode,
        },
    ))
}

/// Crops the content region recorded by `pad` back out of a padded section.
pub fn crop_padded(img: &Array2<f32>, pad: &PadRecord) -> Result<Array2<f32>> {
    let (h, w) = img.dim();
    if pad.pad_bottom >= h || pad.pad_right >= w {
        return Err(Error::SectionGeometry(format!(
            "pad ({}, {}) larger than section {w}x{h}",
            pad.pad_right, pad.pad_bottom
        )));
    }
    Ok(img
        .slice(s![..h - pad.pad_bottom, ..w - pad.pad_right])
        .to_owned())
}

/// Random patch sampling parameters. `size` is `(h, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub size: (usize, usize),
    pub count_per_section: usize,
    pub rng_seed: u64,
}

/// A sampled training patch with its provenance.
#[derive(Debug, Clone)]
pub struct Patch {
    pub section_index: usize,
    /// Top-left corner, 0-based (row, col).
    pub corner: (usize, usize),
    pub data: Array2<f32>,
}

/// Endless stream of uniform-random patches: each epoch visits the sections
/// in a freshly shuffled order, emitting `count_per_section` patches per
/// section with corners drawn uniformly (with replacement across epochs).
/// Fully determined by `spec.rng_seed`.
pub struct PatchSampler<'a> {
    stack: &'a SectionStack,
    spec: PatchSpec,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
    emitted_in_section: usize,
}

impl<'a> PatchSampler<'a> {
    fn new(stack: &'a SectionStack, spec: PatchSpec) -> Result<Self> {
        let (h, w) = stack.dims();
        let (ph, pw) = spec.size;
        if ph == 0 || pw == 0 || spec.count_per_section == 0 {
            return Err(Error::SectionGeometry(
                "patch size and count must be >= 1".into(),
            ));
        }
        if ph > h || pw > w {
            return Err(Error::SectionGeometry(format!(
                "patch {pw}x{ph} does not fit in section {w}x{h}"
            )));
        }
        let mut sampler = PatchSampler {
            stack,
            spec,
            rng: ChaCha8Rng::seed_from_u64(spec.rng_seed),
            order: (0..stack.count()).collect(),
            pos: 0,
            emitted_in_section: 0,
        };
        sampler.reshuffle();
        Ok(sampler)
    }

    /// Patches per epoch: every section once, `count_per_section` each.
    pub fn epoch_len(&self) -> usize {
        self.stack.count() * self.spec.count_per_section
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
        self.emitted_in_section = 0;
    }
}

impl Iterator for PatchSampler<'_> {
    type Item = Patch;

    fn next(&mut self) -> Option<Patch> {
        if self.emitted_in_section == self.spec.count_per_section {
            self.emitted_in_section = 0;
            self.pos += 1;
            if self.pos == self.order.len() {
                self.reshuffle();
            }
        }
        let section_index = self.order[self.pos];
        let section = self.stack.section(section_index);
        let (h, w) = section.dim();
        let (ph, pw) = self.spec.size;
        let top = self.rng.random_range(0..=h - ph);
        let left = self.rng.random_range(0..=w - pw);
        self.emitted_in_section += 1;
        Some(Patch {
            section_index,
            corner: (top, left),
            data: section.slice(s![top..top + ph, left..left + pw]).to_owned(),
        })
    }
}

/// Opens an endless deterministic patch stream over `s`.
pub fn sample_patches<'a>(s: &'a SectionStack, spec: &PatchSpec) -> Result<PatchSampler<'a>> {
    PatchSampler::new(s, *spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Volume;

    fn ramp(shape: (usize, usize, usize)) -> Volume {
        let (x, y, z) = shape;
        let n = (x * y * z) as f32;
        Volume::from_fn(shape, |i, j, k| ((k * y + j) * x + i) as f32 / n).unwrap()
    }

    #[test]
    fn extract_matches_direct_indexing_all_axes() {
        let v = ramp((2, 3, 4));
        // Pixel (i, j) = (column, row): xy section p → voxel (i, j, p),
        // xz section q → (i, q, j), yz section r → (r, i, j).
        let xy = extract_sections(&v, SliceAxis::Xy);
        assert_eq!(xy.count(), 4);
        assert_eq!(xy.dims(), (3, 2)); // (H, W) = (Y, X)
        for p in 0..4 {
            for j in 0..3 {
                for i in 0..2 {
                    assert_eq!(xy.section(p)[(j, i)], v.at(i, j, p));
                }
            }
        }
        let xz = extract_sections(&v, SliceAxis::Xz);
        assert_eq!(xz.count(), 3);
        assert_eq!(xz.dims(), (4, 2)); // (H, W) = (Z, X)
        for q in 0..3 {
            for j in 0..4 {
                for i in 0..2 {
                    assert_eq!(xz.section(q)[(j, i)], v.at(i, q, j));
                }
            }
        }
        let yz = extract_sections(&v, SliceAxis::Yz);
        assert_eq!(yz.count(), 2);
        assert_eq!(yz.dims(), (4, 3)); // (H, W) = (Z, Y)
        for r in 0..2 {
            for j in 0..4 {
                for i in 0..3 {
                    assert_eq!(yz.section(r)[(j, i)], v.at(r, i, j));
                }
            }
        }
    }

    #[test]
    fn extract_section_counts_and_sizes() {
        let v = ramp((5, 6, 7));
        for axis in SliceAxis::ALL {
            let s = extract_sections(&v, axis);
            assert_eq!(s.count(), axis.count_for(v.shape()));
            let (w, h) = axis.section_size(v.shape());
            assert_eq!(s.dims(), (h, w));
            assert!(s.pad().is_zero());
        }
    }

    #[test]
    fn stack_inverts_extract() {
        let v = ramp((5, 6, 7));
        for axis in SliceAxis::ALL {
            let s = extract_sections(&v, axis);
            let back = stack_sections(&s, v.shape()).unwrap();
            assert_eq!(back, v);
        }
    }

    #[test]
    fn stack_removes_recorded_padding() {
        let v = ramp((5, 6, 7));
        let s = extract_sections(&v, SliceAxis::Xz);
        let padded: Vec<Array2<f32>> = s
            .sections()
            .iter()
            .map(|sec| pad_section_to(sec, (sec.dim().0 + 3, sec.dim().1 + 4), PadMode::Zero))
            .map(|r| r.unwrap().0)
            .collect();
        let pad = PadRecord {
            pad_right: 4,
            pad_bottom: 3,
            mode: PadMode::Zero,
        };
        let padded = SectionStack::new(SliceAxis::Xz, padded, pad).unwrap();
        assert_eq!(stack_sections(&padded, v.shape()).unwrap(), v);
    }

    #[test]
    fn stack_rejects_wrong_count_and_dims() {
        let v = ramp((5, 6, 7));
        let s = extract_sections(&v, SliceAxis::Xy);
        assert!(stack_sections(&s, (5, 6, 8)).is_err()); // wrong count
        assert!(stack_sections(&s, (5, 7, 7)).is_err()); // wrong section dims
    }

    #[test]
    fn pad_section_reaches_next_multiple() {
        // A 512x298 (width x height) section padded to multiples of 4 gains
        // two bottom rows and nothing on the right.
        let img = Array2::from_shape_fn((298, 512), |(j, i)| ((i + j) % 7) as f32 / 7.0);
        let (padded, rec) = pad_section(&img, 4, PadMode::Reflect).unwrap();
        assert_eq!(padded.dim(), (300, 512));
        assert_eq!((rec.pad_right, rec.pad_bottom), (0, 2));
        // Reflection excludes the border row: row 298 mirrors row 296.
        for i in 0..512 {
            assert_eq!(padded[(298, i)], img[(296, i)]);
            assert_eq!(padded[(299, i)], img[(295, i)]);
        }
    }

    #[test]
    fn pad_section_already_aligned_is_identity() {
        let img = Array2::from_elem((256, 256), 0.25f32);
        let (padded, rec) = pad_section(&img, 4, PadMode::Reflect).unwrap();
        assert!(rec.is_zero());
        assert_eq!(padded, img);
        let img = Array2::from_elem((84, 84), 0.5f32);
        let (padded, rec) = pad_section(&img, 84, PadMode::Zero).unwrap();
        assert!(rec.is_zero());
        assert_eq!(padded, img);
    }

    #[test]
    fn pad_then_crop_is_identity_on_content() {
        let img = Array2::from_shape_fn((5, 9), |(j, i)| (i * 10 + j) as f32 / 100.0);
        for mode in [PadMode::Reflect, PadMode::Zero] {
            let (padded, rec) = pad_section(&img, 4, mode).unwrap();
            assert_eq!(crop_padded(&padded, &rec).unwrap(), img);
        }
    }

    #[test]
    fn reflect_pad_larger_than_dim_fails() {
        let img = Array2::from_elem((1, 3), 0.5f32);
        assert!(pad_section(&img, 4, PadMode::Reflect).is_err());
        assert!(pad_section(&img, 4, PadMode::Zero).is_ok());
    }

    #[test]
    fn patches_are_contiguous_crops_and_deterministic() {
        let v = ramp((16, 16, 4));
        let stack = extract_sections(&v, SliceAxis::Xy);
        let spec = PatchSpec {
            size: (5, 7),
            count_per_section: 2,
            rng_seed: 42,
        };
        let a: Vec<Patch> = sample_patches(&stack, &spec).unwrap().take(40).collect();
        let b: Vec<Patch> = sample_patches(&stack, &spec).unwrap().take(40).collect();
        for (pa, pb) in a.iter().zip(&b) {
            assert_eq!(pa.section_index, pb.section_index);
            assert_eq!(pa.corner, pb.corner);
            assert_eq!(pa.data, pb.data);
            let sec = stack.section(pa.section_index);
            let (top, left) = pa.corner;
            assert_eq!(
                pa.data,
                sec.slice(s![top..top + 5, left..left + 7]).to_owned()
            );
        }
    }

    #[test]
    fn full_size_patch_is_whole_section() {
        let v = ramp((6, 4, 3));
        let stack = extract_sections(&v, SliceAxis::Xy);
        let spec = PatchSpec {
            size: (4, 6),
            count_per_section: 1,
            rng_seed: 0,
        };
        for patch in sample_patches(&stack, &spec).unwrap().take(9) {
            assert_eq!(patch.corner, (0, 0));
            assert_eq!(&patch.data, stack.section(patch.section_index));
        }
    }

    #[test]
    fn each_epoch_visits_every_section_once() {
        let v = ramp((8, 8, 6));
        let stack = extract_sections(&v, SliceAxis::Xy);
        let spec = PatchSpec {
            size: (4, 4),
            count_per_section: 3,
            rng_seed: 9,
        };
        let sampler = sample_patches(&stack, &spec).unwrap();
        assert_eq!(sampler.epoch_len(), 18);
        let epoch: Vec<Patch> = sampler.take(18).collect();
        let mut counts = [0usize; 6];
        for p in &epoch {
            counts[p.section_index] += 1;
        }
        assert_eq!(counts, [3; 6]);
    }

    #[test]
    fn patch_corners_cover_the_valid_range_uniformly() {
        // 64x64 sections, 32x32 patches: corners lie in {0..=32}^2 and both
        // margins get visited; a chi-square-ish sanity check keeps each of
        // the 4 quadrants within 3 sigma of its expectation.
        let v = ramp((64, 64, 2));
        let stack = extract_sections(&v, SliceAxis::Xy);
        let spec = PatchSpec {
            size: (32, 32),
            count_per_section: 1,
            rng_seed: 1234,
        };
        let n = 4000;
        let corners: Vec<(usize, usize)> = sample_patches(&stack, &spec)
            .unwrap()
            .take(n)
            .map(|p| p.corner)
            .collect();
        assert!(corners.iter().all(|&(t, l)| t <= 32 && l <= 32));
        assert!(corners.iter().any(|&(t, _)| t == 0));
        assert!(corners.iter().any(|&(t, _)| t == 32));
        assert!(corners.iter().any(|&(_, l)| l == 0));
        assert!(corners.iter().any(|&(_, l)| l == 32));
        // Quadrants split at 16: lower side spans 16/33 of the range.
        let p_low = 16.0 / 33.0;
        for (sel, p) in [
            (
                Box::new(|c: &(usize, usize)| c.0 < 16) as Box<dyn Fn(&(usize, usize)) -> bool>,
                p_low,
            ),
            (Box::new(|c: &(usize, usize)| c.1 < 16), p_low),
        ] {
            let k = corners.iter().filter(|c| sel(c)).count() as f64;
            let mean = n as f64 * p;
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!(
                (k - mean).abs() < 3.0 * sd,
                "corner distribution skewed: {k} vs {mean} +- {sd}"
            );
        }
    }

    #[test]
    fn oversized_patch_is_rejected() {
        let v = ramp((4, 4, 2));
        let stack = extract_sections(&v, SliceAxis::Xy);
        let spec = PatchSpec {
            size: (5, 4),
            count_per_section: 1,
            rng_seed: 0,
        };
        assert!(sample_patches(&stack, &spec).is_err());
    }
}
