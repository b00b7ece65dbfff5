//! Python bindings: volumes cross the boundary as `(depth, height, width)`
//! float32 numpy arrays with values in [0, 1]; 2-D metric inputs are
//! `(height, width)` float64 arrays in [0, 255].

use std::path::PathBuf;
use std::sync::OnceLock;

use numpy::{IntoPyArray, PyArray3, PyReadonlyArray2, PyReadonlyArray3};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tridecon_core::infer::{
    fuse_volumes, restore_volume_axis_with, AxisGenerator, FusionWeights, InferOptions, TileConfig,
};
use tridecon_core::iqa::{
    brisque_score, microscopy_ifq, volume_quality_3way, BrisqueMetric, BrisqueModel, IfqMetric,
    LaplacianSurrogate, Metric,
};
use tridecon_core::phantom::{degrade_volume, generate_phantom, DegradeConfig, PhantomConfig};
use tridecon_core::section::SliceAxis;
use tridecon_core::spcyclegan::{
    build_models, save_checkpoint, CheckpointMeta, GeneratorKind, NetConfig, TrainConfig,
};
use tridecon_core::volume::{load_volume, save_volume, BitDepth, Volume, VolumeFormat};
use tridecon_core::Error;

fn to_py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else if matches!(e, Error::Io { .. }) {
        PyIOError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn volume_from(arr: &PyReadonlyArray3<'_, f32>) -> PyResult<Volume> {
    Volume::from_zyx(arr.as_array().to_owned()).map_err(to_py_err)
}

fn volume_to<'py>(py: Python<'py>, v: Volume) -> Bound<'py, PyArray3<f32>> {
    v.into_zyx().into_pyarray(py)
}

fn parse_axis(axis: &str) -> PyResult<SliceAxis> {
    match axis {
        "xy" => Ok(SliceAxis::Xy),
        "xz" => Ok(SliceAxis::Xz),
        "yz" => Ok(SliceAxis::Yz),
        other => Err(PyValueError::new_err(format!(
            "axis must be 'xy', 'xz', or 'yz', got '{other}'"
        ))),
    }
}

fn weights_from(w: (f64, f64, f64)) -> PyResult<FusionWeights> {
    FusionWeights::new(w.0, w.1, w.2).map_err(to_py_err)
}

fn tile_from(tile: Option<(usize, usize)>) -> InferOptions {
    InferOptions { tile: tile.map(|(side, overlap)| TileConfig { side, overlap }) }
}

fn builtin_brisque() -> &'static BrisqueModel {
    static MODEL: OnceLock<BrisqueModel> = OnceLock::new();
    MODEL.get_or_init(BrisqueModel::builtin)
}

/// Synthetic fluorescence phantom: ellipsoids and tubes over a dim
/// background. `shape` is (depth, height, width).
#[pyfunction]
#[pyo3(signature = (shape, ellipsoids=8, tubes=4, background=0.04, seed=0))]
fn phantom<'py>(
    py: Python<'py>,
    shape: (usize, usize, usize),
    ellipsoids: usize,
    tubes: usize,
    background: f32,
    seed: u64,
) -> PyResult<Bound<'py, PyArray3<f32>>> {
    let (z, y, x) = shape;
    let cfg = PhantomConfig { shape: (x, y, z), ellipsoids, tubes, background, seed };
    Ok(volume_to(py, generate_phantom(&cfg).map_err(to_py_err)?))
}

/// Depth-dependent Gaussian blur, Poisson shot noise, and exponential
/// intensity decay; `decay_tau=None` disables the decay.
#[pyfunction]
#[pyo3(signature = (volume, sigma_top=0.4, sigma_bottom=2.2, decay_tau=96.0, photons=400.0, seed=0))]
fn degrade<'py>(
    py: Python<'py>,
    volume: PyReadonlyArray3<'py, f32>,
    sigma_top: f64,
    sigma_bottom: f64,
    decay_tau: Option<f64>,
    photons: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyArray3<f32>>> {
    let v = volume_from(&volume)?;
    let cfg = DegradeConfig { sigma_top, sigma_bottom, decay_tau, photons, seed };
    Ok(volume_to(py, degrade_volume(&v, &cfg).map_err(to_py_err)?))
}

/// Runs one trained generator over every section along its own axis.
/// The checkpoint records which axis it was trained on.
#[pyfunction]
#[pyo3(signature = (volume, checkpoint, tile=None))]
fn restore_axis<'py>(
    py: Python<'py>,
    volume: PyReadonlyArray3<'py, f32>,
    checkpoint: PathBuf,
    tile: Option<(usize, usize)>,
) -> PyResult<Bound<'py, PyArray3<f32>>> {
    let v = volume_from(&volume)?;
    let g = AxisGenerator::from_checkpoint(&checkpoint).map_err(to_py_err)?;
    let out = restore_volume_axis_with(&g, &v, g.axis, &tile_from(tile)).map_err(to_py_err)?;
    Ok(volume_to(py, out))
}

/// Full three-way restoration: per-axis generator passes fused with the
/// given weights. A checkpoint may be omitted only when its weight is 0.
#[pyfunction]
#[pyo3(signature = (volume, xy=None, xz=None, yz=None, weights=(1.0/3.0, 1.0/3.0, 1.0/3.0), tile=None))]
fn restore<'py>(
    py: Python<'py>,
    volume: PyReadonlyArray3<'py, f32>,
    xy: Option<PathBuf>,
    xz: Option<PathBuf>,
    yz: Option<PathBuf>,
    weights: (f64, f64, f64),
    tile: Option<(usize, usize)>,
) -> PyResult<Bound<'py, PyArray3<f32>>> {
    let v = volume_from(&volume)?;
    let w = weights_from(weights)?;
    let opts = tile_from(tile);
    let mut outputs: Vec<Volume> = Vec::with_capacity(3);
    for (axis, path, weight) in [
        (SliceAxis::Xy, xy, w.as_array()[0]),
        (SliceAxis::Xz, xz, w.as_array()[1]),
        (SliceAxis::Yz, yz, w.as_array()[2]),
    ] {
        match path {
            Some(path) => {
                let g = AxisGenerator::from_checkpoint(&path).map_err(to_py_err)?;
                if g.axis != axis {
                    return Err(PyValueError::new_err(format!(
                        "checkpoint '{}' was trained for {}, passed as {}",
                        path.display(),
                        g.axis.as_str(),
                        axis.as_str()
                    )));
                }
                outputs.push(restore_volume_axis_with(&g, &v, axis, &opts).map_err(to_py_err)?);
            }
            None if weight == 0.0 => outputs.push(v.clone()),
            None => {
                return Err(PyValueError::new_err(format!(
                    "no {} checkpoint given but its fusion weight is {weight}",
                    axis.as_str()
                )));
            }
        }
    }
    let fused = fuse_volumes(&outputs[0], &outputs[1], &outputs[2], &w).map_err(to_py_err)?;
    Ok(volume_to(py, fused))
}

/// Weighted voxelwise fusion of three volumes.
#[pyfunction]
#[pyo3(signature = (xy, xz, yz, weights=(1.0/3.0, 1.0/3.0, 1.0/3.0)))]
fn fuse<'py>(
    py: Python<'py>,
    xy: PyReadonlyArray3<'py, f32>,
    xz: PyReadonlyArray3<'py, f32>,
    yz: PyReadonlyArray3<'py, f32>,
    weights: (f64, f64, f64),
) -> PyResult<Bound<'py, PyArray3<f32>>> {
    let (a, b, c) = (volume_from(&xy)?, volume_from(&xz)?, volume_from(&yz)?);
    let w = weights_from(weights)?;
    Ok(volume_to(py, fuse_volumes(&a, &b, &c, &w).map_err(to_py_err)?))
}

/// No-reference quality score of one grayscale image in [0, 255];
/// higher means more distorted.
#[pyfunction]
fn brisque(image: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    brisque_score(&image.as_array(), builtin_brisque()).map_err(to_py_err)
}

/// Patch-averaged expected defocus level in [0, 10] (lower is sharper),
/// using the Laplacian-variance surrogate classifier.
#[pyfunction]
fn ifq_surrogate(image: PyReadonlyArray2<'_, f64>) -> PyResult<f64> {
    microscopy_ifq(&image.as_array(), &LaplacianSurrogate::default()).map_err(to_py_err)
}

/// Scores every section along all three axes and averages: returns
/// {"metric", "score", "lower_is_better", "axes": {axis: {"mean",
/// "sections"}}}.
#[pyfunction]
#[pyo3(signature = (volume, metric="brisque"))]
fn volume_quality<'py>(
    py: Python<'py>,
    volume: PyReadonlyArray3<'py, f32>,
    metric: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let v = volume_from(&volume)?;
    let m: Box<dyn Metric> = match metric {
        "brisque" => Box::new(BrisqueMetric { model: builtin_brisque().clone() }),
        "ifq-surrogate" => {
            Box::new(IfqMetric { classifier: Box::new(LaplacianSurrogate::default()) })
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "metric must be 'brisque' or 'ifq-surrogate', got '{other}'"
            )));
        }
    };
    let q = volume_quality_3way(&v, m.as_ref()).map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("metric", q.metric)?;
    out.set_item("score", q.score)?;
    out.set_item("lower_is_better", q.lower_is_better)?;
    let axes = PyDict::new(py);
    for a in q.axes {
        let entry = PyDict::new(py);
        entry.set_item("mean", a.mean)?;
        entry.set_item("sections", a.sections)?;
        axes.set_item(a.axis.as_str(), entry)?;
    }
    out.set_item("axes", axes)?;
    Ok(out)
}

/// Reads a multi-page grayscale TIFF stack (or `.raw` + sidecar) into a
/// (depth, height, width) float array in [0, 1].
#[pyfunction]
fn load_tiff<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyArray3<f32>>> {
    let v = load_volume(&path, VolumeFormat::TiffStack).map_err(to_py_err)?;
    Ok(volume_to(py, v))
}

/// Writes a volume as a multi-page grayscale TIFF (8 or 16 bits).
#[pyfunction]
#[pyo3(signature = (volume, path, bits=16))]
fn save_tiff(volume: PyReadonlyArray3<'_, f32>, path: PathBuf, bits: u8) -> PyResult<()> {
    let depth = match bits {
        8 => BitDepth::Eight,
        16 => BitDepth::Sixteen,
        other => return Err(PyValueError::new_err(format!("bits must be 8 or 16, got {other}"))),
    };
    save_volume(&volume_from(&volume)?, &path, VolumeFormat::TiffStack, depth).map_err(to_py_err)
}

/// Writes a checkpoint whose generator passes sections through unchanged.
/// Useful for exercising a restoration path without training.
#[pyfunction]
fn write_identity_checkpoint(path: PathBuf, axis: &str) -> PyResult<()> {
    let axis = parse_axis(axis)?;
    let cfg = TrainConfig {
        net: NetConfig { kind: GeneratorKind::Identity, ..NetConfig::toy() },
        ..TrainConfig::default_for_axis(axis)
    };
    let models = build_models::<f32>(&cfg);
    let meta = CheckpointMeta::new::<f32>(&cfg, Some(axis), 1);
    save_checkpoint(&models, &meta, None, &path).map_err(to_py_err)
}

#[pymodule]
fn tridecon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(phantom, m)?)?;
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(restore_axis, m)?)?;
    m.add_function(wrap_pyfunction!(restore, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(brisque, m)?)?;
    m.add_function(wrap_pyfunction!(ifq_surrogate, m)?)?;
    m.add_function(wrap_pyfunction!(volume_quality, m)?)?;
    m.add_function(wrap_pyfunction!(load_tiff, m)?)?;
    m.add_function(wrap_pyfunction!(save_tiff, m)?)?;
    m.add_function(wrap_pyfunction!(write_identity_checkpoint, m)?)?;
    Ok(())
}
