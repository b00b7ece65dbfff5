//! Volume storage, indexing, and disk formats.
//!
//! A [`Volume`] is a 3D grayscale voxel grid with public shape `(X, Y, Z)`.
//! Intensities live in `[0, 1]` in memory and are quantized to 8- or 16-bit
//! integers on disk. On-disk pages are xy sections ordered by z.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};

/// 3D grayscale voxel grid.
///
/// Storage is `(Z, Y, X)` row-major so that an xy page is a contiguous
/// slab; the public API speaks `(X, Y, Z)` and 0-based `at(x, y, z)`.
/// Values are finite and in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    data: Array3<f32>,
}

impl Volume {
    /// Wraps a `(Z, Y, X)`-ordered array. Rejects empty axes and values
    /// outside `[0, 1]` (or non-finite).
    pub fn from_zyx(data: Array3<f32>) -> Result<Self> {
        let (z, y, x) = data.dim();
        if x == 0 || y == 0 || z == 0 {
            return Err(Error::VolumeShape(format!(
                "every axis must be >= 1, got ({x}, {y}, {z})"
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::VolumeShape(format!(
                "voxel value {bad} outside [0, 1]"
            )));
        }
        Ok(Volume { data })
    }

    pub fn zeros(shape_xyz: (usize, usize, usize)) -> Result<Self> {
        let (x, y, z) = shape_xyz;
        if x == 0 || y == 0 || z == 0 {
            return Err(Error::VolumeShape(format!(
                "every axis must be >= 1, got ({x}, {y}, {z})"
            )));
        }
        Ok(Volume {
            data: Array3::zeros((z, y, x)),
        })
    }

    /// Builds a volume by evaluating `f(x, y, z)` (0-based) at every voxel.
    pub fn from_fn(
        shape_xyz: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let (x, y, z) = shape_xyz;
        let data = Array3::from_shape_fn((z, y, x), |(k, j, i)| f(i, j, k));
        Self::from_zyx(data)
    }

    /// Public shape `(X, Y, Z)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        let (z, y, x) = self.data.dim();
        (x, y, z)
    }

    /// Voxel at 0-based `(x, y, z)`.
    pub fn at(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[(z, y, x)]
    }

    /// Backing array in `(Z, Y, X)` order.
    pub fn zyx(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn zyx_mut(&mut self) -> &mut Array3<f32> {
        &mut self.data
    }

    pub fn into_zyx(self) -> Array3<f32> {
        self.data
    }
}

/// On-disk layouts understood by [`load_volume`] / [`save_volume`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeFormat {
    /// Multi-page grayscale TIFF, one xy page per z index.
    TiffStack,
    /// Raw little-endian voxel payload plus a `<path>.meta` sidecar
    /// (text, `key=value`: width, height, depth, bits).
    RawWithMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::UnsupportedBitDepth(other)),
        }
    }

    fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// Round-half-up quantization of `v` in `[0,1]` to an integer code.
pub fn quantize(v: f32, depth: BitDepth) -> u32 {
    let max = depth.max_value();
    let q = (f64::from(v) * max + 0.5).floor();
    q.clamp(0.0, max) as u32
}

/// Inverse of [`quantize`]: code to `[0,1]` intensity.
pub fn dequantize(code: u32, depth: BitDepth) -> f32 {
    (f64::from(code) / depth.max_value()) as f32
}

/// 1-based inclusive axis bounds, `(x, y, z)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SubvolumeRange {
    pub x: (usize, usize),
    pub y: (usize, usize),
    pub z: (usize, usize),
}

impl SubvolumeRange {
    pub fn new(x: (usize, usize), y: (usize, usize), z: (usize, usize)) -> Result<Self> {
        for (name, (lo, hi)) in [("x", x), ("y", y), ("z", z)] {
            if lo < 1 || lo > hi {
                return Err(Error::InvalidRange(format!(
                    "{name} bounds ({lo}:{hi}) must satisfy 1 <= lo <= hi"
                )));
            }
        }
        Ok(SubvolumeRange { x, y, z })
    }

    /// Full range of a volume of the given `(X, Y, Z)` shape.
    pub fn full(shape: (usize, usize, usize)) -> Self {
        SubvolumeRange {
            x: (1, shape.0),
            y: (1, shape.1),
            z: (1, shape.2),
        }
    }

    pub fn validate_for(&self, shape: (usize, usize, usize)) -> Result<()> {
        for (name, (lo, hi), extent) in [
            ("x", self.x, shape.0),
            ("y", self.y, shape.1),
            ("z", self.z, shape.2),
        ] {
            if lo < 1 || lo > hi {
                return Err(Error::InvalidRange(format!(
                    "{name} bounds ({lo}:{hi}) must satisfy 1 <= lo <= hi"
                )));
            }
            if hi > extent {
                return Err(Error::InvalidRange(format!(
                    "{name} bound {hi} exceeds extent {extent}"
                )));
            }
        }
        Ok(())
    }

    /// Output extents `(X, Y, Z)` of a crop by this range.
    pub fn extent(&self) -> (usize, usize, usize) {
        (
            self.x.1 - self.x.0 + 1,
            self.y.1 - self.y.0 + 1,
            self.z.1 - self.z.0 + 1,
        )
    }

    fn z_overlaps(&self, other: &SubvolumeRange) -> bool {
        self.z.0 <= other.z.1 && other.z.0 <= self.z.1
    }
}

/// Source crops for the blurred-domain, clean-domain, and test volumes.
///
/// The blurred and clean crops must not share any z slice: they stand in
/// for unpaired domains, and z overlap would leak one into the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct DatasetSplit {
    pub blurred: SubvolumeRange,
    pub clean: SubvolumeRange,
    pub test: SubvolumeRange,
}

impl DatasetSplit {
    /// The shape-independent part of validation: well-formed bounds and
    /// disjoint blurred/clean z ranges.
    pub fn validate_ranges(&self) -> Result<()> {
        for (name, r) in [("blurred", self.blurred), ("clean", self.clean), ("test", self.test)] {
            for (axis, (lo, hi)) in [("x", r.x), ("y", r.y), ("z", r.z)] {
                if lo < 1 || lo > hi {
                    return Err(Error::InvalidRange(format!(
                        "{name} {axis} bounds ({lo}:{hi}) must satisfy 1 <= lo <= hi"
                    )));
                }
            }
        }
        if self.blurred.z_overlaps(&self.clean) {
            return Err(Error::InvalidRange(format!(
                "blurred z range {:?} overlaps clean z range {:?}",
                self.blurred.z, self.clean.z
            )));
        }
        Ok(())
    }

    pub fn validate_for(&self, shape: (usize, usize, usize)) -> Result<()> {
        self.validate_ranges()?;
        self.blurred.validate_for(shape)?;
        self.clean.validate_for(shape)?;
        self.test.validate_for(shape)?;
        Ok(())
    }
}

/// Crops `v` to the 1-based inclusive range `r`.
pub fn crop_subvolume(v: &Volume, r: &SubvolumeRange) -> Result<Volume> {
    r.validate_for(v.shape())?;
    let (xl, yl, zl) = (r.x.0 - 1, r.y.0 - 1, r.z.0 - 1);
    let (xn, yn, zn) = r.extent();
    let data = v
        .zyx()
        .slice(ndarray::s![zl..zl + zn, yl..yl + yn, xl..xl + xn])
        .to_owned();
    Ok(Volume { data })
}

/// Crops the blurred, clean, and test volumes out of one source volume.
/// Returns owned copies sharing no storage with `v`.
pub fn split_training_volumes(v: &Volume, s: &DatasetSplit) -> Result<(Volume, Volume, Volume)> {
    s.validate_for(v.shape())?;
    Ok((
        crop_subvolume(v, &s.blurred)?,
        crop_subvolume(v, &s.clean)?,
        crop_subvolume(v, &s.test)?,
    ))
}

pub fn load_volume(path: &Path, format: VolumeFormat) -> Result<Volume> {
    match format {
        VolumeFormat::TiffStack => load_tiff(path),
        VolumeFormat::RawWithMetadata => load_raw(path),
    }
}

pub fn save_volume(v: &Volume, path: &Path, format: VolumeFormat, depth: BitDepth) -> Result<()> {
    match format {
        VolumeFormat::TiffStack => save_tiff(v, path, depth),
        VolumeFormat::RawWithMetadata => save_raw(v, path, depth),
    }
}

fn tiff_err(path: &Path, e: tiff::TiffError) -> Error {
    Error::Tiff {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn load_tiff(path: &Path) -> Result<Volume> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut dec =
        tiff::decoder::Decoder::new(BufReader::new(file)).map_err(|e| tiff_err(path, e))?;
    let mut pages: Vec<Vec<f32>> = Vec::new();
    let mut dims: Option<(u32, u32)> = None;
    loop {
        let (w, h) = dec.dimensions().map_err(|e| tiff_err(path, e))?;
        match dims {
            None => dims = Some((w, h)),
            Some(d) if d != (w, h) => {
                return Err(Error::VolumeShape(format!(
                    "page {} is {}x{}, first page is {}x{}",
                    pages.len(),
                    w,
                    h,
                    d.0,
                    d.1
                )))
            }
            _ => {}
        }
        let page = match dec.read_image().map_err(|e| tiff_err(path, e))? {
            tiff::decoder::DecodingResult::U8(buf) => buf
                .iter()
                .map(|&b| dequantize(u32::from(b), BitDepth::Eight))
                .collect(),
            tiff::decoder::DecodingResult::U16(buf) => buf
                .iter()
                .map(|&b| dequantize(u32::from(b), BitDepth::Sixteen))
                .collect(),
            _ => return Err(Error::UnsupportedBitDepth(0)),
        };
        pages.push(page);
        if !dec.more_images() {
            break;
        }
        dec.next_image().map_err(|e| tiff_err(path, e))?;
    }
    let (w, h) = dims.expect("at least one page");
    pages_to_volume(pages, w as usize, h as usize)
}

fn pages_to_volume(pages: Vec<Vec<f32>>, w: usize, h: usize) -> Result<Volume> {
    let z = pages.len();
    let mut data = Array3::zeros((z, h, w));
    for (k, page) in pages.into_iter().enumerate() {
        if page.len() != w * h {
            return Err(Error::VolumeShape(format!(
                "page {k} has {} samples, expected {}",
                page.len(),
                w * h
            )));
        }
        for j in 0..h {
            for i in 0..w {
                data[(k, j, i)] = page[j * w + i];
            }
        }
    }
    Volume::from_zyx(data)
}

fn save_tiff(v: &Volume, path: &Path, depth: BitDepth) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc =
        tiff::encoder::TiffEncoder::new(BufWriter::new(file)).map_err(|e| tiff_err(path, e))?;
    let (x, y, z) = v.shape();
    for k in 0..z {
        match depth {
            BitDepth::Eight => {
                let page: Vec<u8> = page_codes(v, k, depth).map(|c| c as u8).collect();
                enc.write_image::<tiff::encoder::colortype::Gray8>(x as u32, y as u32, &page)
                    .map_err(|e| tiff_err(path, e))?;
            }
            BitDepth::Sixteen => {
                let page: Vec<u16> = page_codes(v, k, depth).map(|c| c as u16).collect();
                enc.write_image::<tiff::encoder::colortype::Gray16>(x as u32, y as u32, &page)
                    .map_err(|e| tiff_err(path, e))?;
            }
        }
    }
    Ok(())
}

/// Quantized codes of xy page `k`, row-major (y outer, x inner).
fn page_codes(v: &Volume, k: usize, depth: BitDepth) -> impl Iterator<Item = u32> + '_ {
    let (x, y, _) = v.shape();
    (0..y).flat_map(move |j| (0..x).map(move |i| quantize(v.at(i, j, k), depth)))
}

fn load_raw(path: &Path) -> Result<Volume> {
    let meta_path = sidecar_path(path);
    let meta = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut width = None;
    let mut height = None;
    let mut depth_z = None;
    let mut bits = None;
    for (lineno, line) in meta.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Metadata {
            path: meta_path.clone(),
            message: format!("line {}: expected key=value, got '{line}'", lineno + 1),
        })?;
        let value: usize = value.trim().parse().map_err(|_| Error::Metadata {
            path: meta_path.clone(),
            message: format!("line {}: '{}' is not an integer", lineno + 1, value.trim()),
        })?;
        match key.trim() {
            "width" => width = Some(value),
            "height" => height = Some(value),
            "depth" => depth_z = Some(value),
            "bits" => bits = Some(value),
            other => {
                return Err(Error::Metadata {
                    path: meta_path.clone(),
                    message: format!("unknown key '{other}'"),
                })
            }
        }
    }
    let missing = |name: &str| Error::Metadata {
        path: meta_path.clone(),
        message: format!("missing key '{name}'"),
    };
    let w = width.ok_or_else(|| missing("width"))?;
    let h = height.ok_or_else(|| missing("height"))?;
    let z = depth_z.ok_or_else(|| missing("depth"))?;
    let depth = BitDepth::from_bits(bits.ok_or_else(|| missing("bits"))? as u32)?;

    let mut payload = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut payload))
        .map_err(|e| Error::io(path, e))?;
    let bytes_per = (depth.bits() / 8) as usize;
    let expected = w * h * z * bytes_per;
    if payload.len() != expected {
        return Err(Error::VolumeShape(format!(
            "raw payload is {} bytes, metadata implies {expected}",
            payload.len()
        )));
    }
    let mut data = Array3::zeros((z, h, w));
    for k in 0..z {
        for j in 0..h {
            for i in 0..w {
                let off = ((k * h + j) * w + i) * bytes_per;
                let code = match depth {
                    BitDepth::Eight => u32::from(payload[off]),
                    BitDepth::Sixteen => {
                        u32::from(u16::from_le_bytes([payload[off], payload[off + 1]]))
                    }
                };
                data[(k, j, i)] = dequantize(code, depth);
            }
        }
    }
    Volume::from_zyx(data)
}

fn save_raw(v: &Volume, path: &Path, depth: BitDepth) -> Result<()> {
    let (x, y, z) = v.shape();
    let mut out = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for k in 0..z {
        for j in 0..y {
            for i in 0..x {
                let code = quantize(v.at(i, j, k), depth);
                match depth {
                    BitDepth::Eight => out
                        .write_all(&[code as u8])
                        .map_err(|e| Error::io(path, e))?,
                    BitDepth::Sixteen => out
                        .write_all(&(code as u16).to_le_bytes())
                        .map_err(|e| Error::io(path, e))?,
                }
            }
        }
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    let meta = format!(
        "width={x}\nheight={y}\ndepth={z}\nbits={}\n# byte order: little-endian\n",
        depth.bits()
    );
    let meta_path = sidecar_path(path);
    std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta");
    std::path::PathBuf::from(os)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: (usize, usize, usize)) -> Volume {
        let (x, y, z) = shape;
        let n = (x * y * z) as f32;
        Volume::from_fn(shape, |i, j, k| ((k * y + j) * x + i) as f32 / n).unwrap()
    }

    #[test]
    fn quantize_is_round_half_up() {
        assert_eq!(quantize(0.5, BitDepth::Eight), 128);
        assert_eq!(quantize(0.0, BitDepth::Eight), 0);
        assert_eq!(quantize(1.0, BitDepth::Eight), 255);
        // 0.5/255 is the first tie; round half up takes it to 1.
        assert_eq!(quantize(0.5 / 255.0, BitDepth::Eight), 1);
        assert_eq!(quantize(0.4999 / 255.0, BitDepth::Eight), 0);
        assert_eq!(quantize(0.5, BitDepth::Sixteen), 32768);
    }

    #[test]
    fn dequantize_quantize_round_trips_all_u8_codes() {
        for code in 0..=255u32 {
            assert_eq!(quantize(dequantize(code, BitDepth::Eight), BitDepth::Eight), code);
        }
    }

    #[test]
    fn tiff_full_scale_white_single_page() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.tif");
        let v = Volume::from_fn((4, 4, 1), |_, _, _| 1.0).unwrap();
        save_volume(&v, &path, VolumeFormat::TiffStack, BitDepth::Eight).unwrap();
        let back = load_volume(&path, VolumeFormat::TiffStack).unwrap();
        assert_eq!(back.shape(), (4, 4, 1));
        assert!(back.zyx().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn tiff_round_trip_preserves_8bit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.tif");
        let v = ramp((5, 4, 3));
        save_volume(&v, &path, VolumeFormat::TiffStack, BitDepth::Eight).unwrap();
        let back = load_volume(&path, VolumeFormat::TiffStack).unwrap();
        assert_eq!(back.shape(), v.shape());
        for ((i, j, k), _) in iter_xyz(v.shape()) {
            assert_eq!(
                quantize(back.at(i, j, k), BitDepth::Eight),
                quantize(v.at(i, j, k), BitDepth::Eight),
            );
        }
        // Saving the reloaded volume reproduces the file byte-for-byte.
        let path2 = dir.path().join("v2.tif");
        save_volume(&back, &path2, VolumeFormat::TiffStack, BitDepth::Eight).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn tiff_half_gray_is_128_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.tif");
        let v = Volume::from_fn((3, 2, 2), |_, _, _| 0.5).unwrap();
        save_volume(&v, &path, VolumeFormat::TiffStack, BitDepth::Eight).unwrap();
        let back = load_volume(&path, VolumeFormat::TiffStack).unwrap();
        assert!(back
            .zyx()
            .iter()
            .all(|&v| quantize(v, BitDepth::Eight) == 128));
    }

    #[test]
    fn tiff_axis_convention_pages_are_xy_by_z() {
        // (3,2,4): 4 pages of width 3, height 2, and a ramp survives the trip.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("axes.tif");
        let v = Volume::from_fn((3, 2, 4), |i, j, k| {
            (i as f32 + 10.0 * j as f32 + 100.0 * k as f32) / 512.0
        })
        .unwrap();
        save_volume(&v, &path, VolumeFormat::TiffStack, BitDepth::Eight).unwrap();
        let back = load_volume(&path, VolumeFormat::TiffStack).unwrap();
        assert_eq!(back.shape(), (3, 2, 4));
        for ((i, j, k), _) in iter_xyz((3, 2, 4)) {
            assert_eq!(
                quantize(back.at(i, j, k), BitDepth::Eight),
                quantize(v.at(i, j, k), BitDepth::Eight)
            );
        }
    }

    #[test]
    fn raw_round_trip_16bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        let v = ramp((4, 3, 2));
        save_volume(&v, &path, VolumeFormat::RawWithMetadata, BitDepth::Sixteen).unwrap();
        let back = load_volume(&path, VolumeFormat::RawWithMetadata).unwrap();
        assert_eq!(back.shape(), v.shape());
        for ((i, j, k), _) in iter_xyz(v.shape()) {
            assert_eq!(
                quantize(back.at(i, j, k), BitDepth::Sixteen),
                quantize(v.at(i, j, k), BitDepth::Sixteen)
            );
        }
    }

    #[test]
    fn raw_shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        let v = ramp((4, 3, 2));
        save_volume(&v, &path, VolumeFormat::RawWithMetadata, BitDepth::Eight).unwrap();
        // Corrupt the sidecar to claim a deeper volume.
        let meta = sidecar_path(&path);
        std::fs::write(&meta, "width=4\nheight=3\ndepth=9\nbits=8\n").unwrap();
        assert!(matches!(
            load_volume(&path, VolumeFormat::RawWithMetadata),
            Err(Error::VolumeShape(_))
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_volume(Path::new("/nonexistent/v.tif"), VolumeFormat::TiffStack),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn crop_matches_manual_indexing() {
        let v = ramp((6, 5, 4));
        let r = SubvolumeRange::new((2, 4), (1, 5), (3, 4)).unwrap();
        let c = crop_subvolume(&v, &r).unwrap();
        assert_eq!(c.shape(), (3, 5, 2));
        for ((i, j, k), _) in iter_xyz(c.shape()) {
            assert_eq!(c.at(i, j, k), v.at(i + 1, j, k + 2));
        }
        // Voxel (1,1,1) of the crop is voxel (r_i, q_i, p_i) of the input.
        assert_eq!(c.at(0, 0, 0), v.at(1, 0, 2));
    }

    #[test]
    fn crop_full_range_is_identity() {
        let v = ramp((4, 4, 4));
        let c = crop_subvolume(&v, &SubvolumeRange::full(v.shape())).unwrap();
        assert_eq!(c, v);
    }

    #[test]
    fn crop_composition() {
        // Crop (a:b) then (c:d) equals crop (a+c-1 : a+d-1).
        let v = ramp((8, 8, 8));
        let outer = SubvolumeRange::new((2, 7), (1, 8), (3, 8)).unwrap();
        let inner = SubvolumeRange::new((2, 4), (3, 5), (1, 6)).unwrap();
        let once = crop_subvolume(&crop_subvolume(&v, &outer).unwrap(), &inner).unwrap();
        let fused = SubvolumeRange::new((3, 5), (3, 5), (3, 8)).unwrap();
        assert_eq!(once, crop_subvolume(&v, &fused).unwrap());
    }

    #[test]
    fn crop_out_of_bounds_and_inverted_bounds_fail() {
        let v = ramp((4, 4, 4));
        let r = SubvolumeRange::new((1, 5), (1, 4), (1, 4)).unwrap();
        assert!(crop_subvolume(&v, &r).is_err());
        assert!(SubvolumeRange::new((3, 2), (1, 4), (1, 4)).is_err());
        assert!(SubvolumeRange::new((0, 2), (1, 4), (1, 4)).is_err());
    }

    #[test]
    fn split_disjoint_toy_volume() {
        let v = ramp((8, 8, 8));
        let s = DatasetSplit {
            blurred: SubvolumeRange::new((1, 8), (1, 8), (6, 8)).unwrap(),
            clean: SubvolumeRange::new((1, 8), (1, 8), (1, 3)).unwrap(),
            test: SubvolumeRange::new((1, 8), (1, 8), (4, 8)).unwrap(),
        };
        let (a, b, t) = split_training_volumes(&v, &s).unwrap();
        assert_eq!(a.shape(), (8, 8, 3));
        assert_eq!(b.shape(), (8, 8, 3));
        assert_eq!(t.shape(), (8, 8, 5));
        for ((i, j, k), _) in iter_xyz(a.shape()) {
            assert_eq!(a.at(i, j, k), v.at(i, j, k + 5));
            assert_eq!(b.at(i, j, k), v.at(i, j, k));
        }
    }

    #[test]
    fn split_rejects_z_overlap_between_domains() {
        let v = ramp((4, 4, 8));
        let s = DatasetSplit {
            blurred: SubvolumeRange::new((1, 4), (1, 4), (4, 6)).unwrap(),
            clean: SubvolumeRange::new((1, 4), (1, 4), (6, 8)).unwrap(),
            test: SubvolumeRange::new((1, 4), (1, 4), (1, 8)).unwrap(),
        };
        assert!(matches!(
            split_training_volumes(&v, &s),
            Err(Error::InvalidRange(_))
        ));
    }

    /// Iterates 0-based (x, y, z) indices of a shape.
    fn iter_xyz(
        shape: (usize, usize, usize),
    ) -> impl Iterator<Item = ((usize, usize, usize), ())> {
        let (x, y, z) = shape;
        (0..z).flat_map(move |k| {
            (0..y).flat_map(move |j| (0..x).map(move |i| ((i, j, k), ())))
        })
    }
}
