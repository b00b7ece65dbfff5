//! No-reference image quality assessment for restored volumes.
//!
//! Two families of scorers are built in: natural-scene-statistics
//! regression (MSCN coefficients → (A)GGD fits → kernel regressor, 0..100,
//! lower better) and patch-wise defocus expectation (84×84 tiles → 11
//! defocus levels → expected level, 0..10, lower better). External scorers
//! plug in through [`Metric`] adapters. Volume scores follow the sectional
//! protocol: score every xy/xz/yz section, average per axis, average the
//! three axis means.

pub mod brisque;
pub mod calib;
pub mod dist;
pub mod ifq;
pub mod mscn;
pub mod threeway;


pub use brisque::{brisque_features, brisque_score, BrisqueFeatures, BrisqueModel, FEATURE_DIM};
pub use calib::{base_images, degrade, DegradationFamily};
pub use dist::{fit_aggd, fit_ggd, AggdFit, GgdFit};
pub use ifq::{
    microscopy_ifq, resize_bilinear, resized_dims, FocusProbabilities, LaplacianSurrogate,
    PatchClassifier, DEFOCUS_LEVELS, PATCH_SIDE,
};
pub use mscn::{half_resolution, mscn_coefficients, neighbor_products};
pub use threeway::{
    evaluate_volumes, volume_quality_3way, AxisScores, BrisqueMetric, ExternalCommandMetric,
    IfqMetric, Metric, MetricQuality, QualityReport, VolumeQuality,
};
