//! Metric adapters and the 3-way sectional aggregation protocol.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::Command;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::section::{extract_sections, SliceAxis};
use crate::volume::{save_volume, BitDepth, Volume, VolumeFormat};

use super::brisque::{brisque_score, BrisqueModel};
use super::ifq::{microscopy_ifq, PatchClassifier};

/// A no-reference quality metric on 2D grayscale images in [0,255].
pub trait Metric: Send + Sync {
    fn name(&self) -> &str;
    /// True when smaller scores mean better quality.
    fn lower_is_better(&self) -> bool;
    fn range(&self) -> (f64, f64);
    fn score(&self, img: &ArrayView2<f64>) -> Result<f64>;
}

pub struct BrisqueMetric {
    pub model: BrisqueModel,
}

impl Metric for BrisqueMetric {
    fn name(&self) -> &str {
        "brisque"
    }

    fn lower_is_better(&self) -> bool {
        true
    }

    fn range(&self) -> (f64, f64) {
        (0.0, 100.0)
    }

    fn score(&self, img: &ArrayView2<f64>) -> Result<f64> {
        brisque_score(img, &self.model)
    }
}

pub struct IfqMetric {
    pub classifier: Box<dyn PatchClassifier>,
}

impl Metric for IfqMetric {
    fn name(&self) -> &str {
        self.classifier.name()
    }

    fn lower_is_better(&self) -> bool {
        true
    }

    fn range(&self) -> (f64, f64) {
        (0.0, 10.0)
    }

    fn score(&self, img: &ArrayView2<f64>) -> Result<f64> {
        microscopy_ifq(img, self.classifier.as_ref())
    }
}

/// Adapter for external scorers (e.g. a pretrained model behind a script):
/// the section is written as a 16-bit TIFF, the command is run with the
/// file path appended, and stdout must be a single number.
pub struct ExternalCommandMetric {
    pub name: String,
    pub command: Vec<String>,
    pub lower_is_better: bool,
    pub range: (f64, f64),
}

impl ExternalCommandMetric {
    fn run(&self, img: &ArrayView2<f64>) -> Result<f64> {
        let fail = |message: String| Error::Metric {
            metric: self.name.clone(),
            context: "external command".into(),
            message,
        };
        let program = self
            .command
            .first()
            .ok_or_else(|| fail("empty command".into()))?;

        let dir = tempfile::tempdir().map_err(|e| fail(format!("tempdir: {e}")))?;
        let img_path: PathBuf = dir.path().join("section.tif");
        let (h, w) = img.dim();
        let page = Volume::from_fn((w, h, 1), |x, y, _| (img[(y, x)] / 255.0) as f32)?;
        save_volume(&page, &img_path, VolumeFormat::TiffStack, BitDepth::Sixteen)?;

        let output = Command::new(program)
            .args(&self.command[1..])
            .arg(&img_path)
            .output()
            .map_err(|e| fail(format!("spawn '{program}': {e}")))?;
        if !output.status.success() {
            return Err(fail(format!(
                "exit status {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        stdout
            .trim()
            .parse::<f64>()
            .map_err(|_| fail(format!("unparseable score output '{}'", stdout.trim())))
    }
}

impl Metric for ExternalCommandMetric {
    fn name(&self) -> &str {
        &self.name
    }

    fn lower_is_better(&self) -> bool {
        self.lower_is_better
    }

    fn range(&self) -> (f64, f64) {
        self.range
    }

    fn score(&self, img: &ArrayView2<f64>) -> Result<f64> {
        self.run(img)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisScores {
    pub axis: SliceAxis,
    pub sections: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricQuality {
    pub metric: String,
    pub lower_is_better: bool,
    pub axes: Vec<AxisScores>,
    /// Mean of the three axis means.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeQuality {
    pub volume: String,
    pub metrics: Vec<MetricQuality>,
}

/// Table-1-shaped result matrix: one row per volume, one column per
/// metric, plus the per-axis and per-section detail behind each cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub config_hash: String,
    pub volumes: Vec<VolumeQuality>,
}

fn section_to_255(s: &Array2<f32>) -> Array2<f64> {
    s.mapv(|v| v as f64 * 255.0)
}

/// Scores every section of all three axes, averages per axis, then
/// averages the three axis means. Sections are scored in parallel; the
/// reduction order is fixed, so results do not depend on the schedule.
pub fn volume_quality_3way(v: &Volume, metric: &dyn Metric) -> Result<MetricQuality> {
    let mut axes = Vec::with_capacity(3);
    for axis in SliceAxis::ALL {
        let stack = extract_sections(v, axis);
        let sections: Vec<f64> = stack
            .sections()
            .par_iter()
            .enumerate()
            .map(|(k, s)| {
                metric
                    .score(&section_to_255(s).view())
                    .map_err(|e| Error::Metric {
                        metric: metric.name().into(),
                        context: format!("{axis} section {k}"),
                        message: e.to_string(),
                    })
            })
            .collect::<Result<_>>()?;
        let mean = sections.iter().sum::<f64>() / sections.len() as f64;
        axes.push(AxisScores { axis, sections, mean });
    }
    let score = axes.iter().map(|a| a.mean).sum::<f64>() / 3.0;
    Ok(MetricQuality {
        metric: metric.name().into(),
        lower_is_better: metric.lower_is_better(),
        axes,
        score,
    })
}

pub fn evaluate_volumes(
    volumes: &[(String, &Volume)],
    metrics: &[&dyn Metric],
    config_hash: &str,
) -> Result<QualityReport> {
    let volumes = volumes
        .iter()
        .map(|(name, v)| {
            let metrics = metrics
                .iter()
                .map(|m| volume_quality_3way(v, *m))
                .collect::<Result<Vec<_>>>()?;
            Ok(VolumeQuality { volume: name.clone(), metrics })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QualityReport { config_hash: config_hash.into(), volumes })
}

impl QualityReport {
    fn metric_names(&self) -> Vec<&str> {
        self.volumes
            .first()
            .map(|v| v.metrics.iter().map(|m| m.metric.as_str()).collect())
            .unwrap_or_default()
    }

    /// volume × metric matrix of final scores.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("volume");
        for name in self.metric_names() {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for v in &self.volumes {
            out.push_str(&v.volume);
            for m in &v.metrics {
                let _ = write!(out, ",{:.6}", m.score);
            }
            out.push('\n');
        }
        out
    }

    /// Per-section breakdown.
    pub fn detail_csv(&self) -> String {
        let mut out = String::from("volume,metric,axis,section,score\n");
        for v in &self.volumes {
            for m in &v.metrics {
                for a in &m.axes {
                    for (k, s) in a.sections.iter().enumerate() {
                        let _ = writeln!(out, "{},{},{},{},{:.6}", v.volume, m.metric, a.axis, k, s);
                    }
                }
            }
        }
        out
    }

    /// Fixed-width scoreboard, one row per volume.
    pub fn aligned_text(&self) -> String {
        let names = self.metric_names();
        let vol_w = self
            .volumes
            .iter()
            .map(|v| v.volume.len())
            .chain(["volume".len()])
            .max()
            .unwrap_or(6);
        let col_w: Vec<usize> = names.iter().map(|n| n.len().max(10)).collect();
        let mut out = format!("{:<vol_w$}", "volume");
        for (name, w) in names.iter().zip(&col_w) {
            let _ = write!(out, "  {name:>w$}");
        }
        out.push('\n');
        for v in &self.volumes {
            let _ = write!(out, "{:<vol_w$}", v.volume);
            for (m, w) in v.metrics.iter().zip(&col_w) {
                let _ = write!(out, "  {:>w$.4}", m.score);
            }
            out.push('\n');
        }
        out
    }
}
