//! Experiment configuration: one TOML file drives every stage.
//!
//! Precedence: CLI flags (`--seed`, `--out`) override file values, which
//! override defaults. Relative paths in the file resolve against the file's
//! own directory, so a config can travel with its data.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infer::{FusionWeights, TileConfig};
use crate::phantom::{DegradeConfig, PhantomConfig};
use crate::section::SliceAxis;
use crate::spcyclegan::{derive_seed, GanMode, HUpdate, NetConfig, TrainConfig};
use crate::volume::{BitDepth, DatasetSplit, VolumeFormat};

/// On-disk volume encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FormatName {
    #[default]
    Tiff,
    Raw,
}

impl FormatName {
    pub fn volume_format(self) -> VolumeFormat {
        match self {
            FormatName::Tiff => VolumeFormat::TiffStack,
            FormatName::Raw => VolumeFormat::RawWithMetadata,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            FormatName::Tiff => "tiff",
            FormatName::Raw => "raw",
        }
    }
}

/// Picks the volume format for an existing file by its extension.
pub fn format_for_path(path: &Path) -> Result<VolumeFormat> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tif") | Some("tiff") => Ok(VolumeFormat::TiffStack),
        Some("raw") => Ok(VolumeFormat::RawWithMetadata),
        other => Err(Error::Config(format!(
            "cannot infer volume format of '{}' (extension {:?}); use .tiff or .raw",
            path.display(),
            other.unwrap_or("none")
        ))),
    }
}

/// Where the three working volumes come from. Exactly one mode:
/// a single `volume` carved up by `[split]`, three explicit volumes, or
/// `synthetic = true` pointing at the `make-synthetic` stage's outputs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputSection {
    pub volume: Option<PathBuf>,
    pub blurred: Option<PathBuf>,
    pub clean: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub synthetic: bool,
    pub format: FormatName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    /// One source volume plus `[split]` crop ranges.
    Split,
    /// Three volumes given directly.
    Direct,
    /// The `make-synthetic` stage supplies blurred/clean/test.
    Synthetic,
}

/// How written volumes are encoded.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub format: FormatName,
    pub bit_depth: u32,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { format: FormatName::Tiff, bit_depth: 16 }
    }
}

impl OutputSection {
    pub fn depth(&self) -> Result<BitDepth> {
        BitDepth::from_bits(self.bit_depth)
    }
}

/// Partial training settings layered over the per-axis defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverride {
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lr: Option<f64>,
    pub epochs_const: Option<usize>,
    pub epochs_decay: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub batch_size: Option<usize>,
    /// `[height, width]`, both multiples of 4.
    pub patch: Option<[usize; 2]>,
    pub patches_per_section: Option<usize>,
    pub gan_mode: Option<GanMode>,
    pub pool_size: Option<usize>,
    pub seed: Option<u64>,
    pub net: Option<NetConfig>,
    pub h_update: Option<HUpdate>,
    pub checkpoint_every: Option<usize>,
}

impl TrainOverride {
    fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.lambda1 {
            cfg.lambda1 = v;
        }
        if let Some(v) = self.lambda2 {
            cfg.lambda2 = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.epochs_const {
            cfg.epochs_const = v;
        }
        if let Some(v) = self.epochs_decay {
            cfg.epochs_decay = v;
        }
        if let Some(v) = self.beta1 {
            cfg.beta1 = v;
        }
        if let Some(v) = self.beta2 {
            cfg.beta2 = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some([h, w]) = self.patch {
            cfg.patch = (h, w);
        }
        if let Some(v) = self.patches_per_section {
            cfg.patches_per_section = v;
        }
        if let Some(v) = self.gan_mode {
            cfg.gan_mode = v;
        }
        if let Some(v) = self.pool_size {
            cfg.pool_size = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.net {
            cfg.net = v;
        }
        if let Some(v) = self.h_update {
            cfg.h_update = v;
        }
        if let Some(v) = self.checkpoint_every {
            cfg.checkpoint_every = v;
        }
    }
}

/// `[train]` applies to every axis; `[train.xy]` etc. refine one axis.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    #[serde(flatten)]
    pub all: TrainOverride,
    pub xy: TrainOverride,
    pub xz: TrainOverride,
    pub yz: TrainOverride,
}

impl TrainSection {
    fn for_axis(&self, axis: SliceAxis) -> &TrainOverride {
        match axis {
            SliceAxis::Xy => &self.xy,
            SliceAxis::Xz => &self.xz,
            SliceAxis::Yz => &self.yz,
        }
    }
}

/// Explicit checkpoint sources; unset axes use the train stage's final
/// checkpoint.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckpointOverrides {
    pub xy: Option<PathBuf>,
    pub xz: Option<PathBuf>,
    pub yz: Option<PathBuf>,
}

impl CheckpointOverrides {
    pub fn for_axis(&self, axis: SliceAxis) -> Option<&PathBuf> {
        match axis {
            SliceAxis::Xy => self.xy.as_ref(),
            SliceAxis::Xz => self.xz.as_ref(),
            SliceAxis::Yz => self.yz.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestoreSection {
    /// Also write the three per-axis restored volumes next to the fused one.
    pub dump_axis_outputs: bool,
    pub tile: Option<TileConfig>,
    pub checkpoints: CheckpointOverrides,
}

/// 1-based inclusive bounds; omitted axes cover the full extent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RangeSection {
    pub x: Option<[usize; 2]>,
    pub y: Option<[usize; 2]>,
    pub z: Option<[usize; 2]>,
}

impl RangeSection {
    pub fn is_full(&self) -> bool {
        self.x.is_none() && self.y.is_none() && self.z.is_none()
    }

    pub fn resolve(&self, shape: (usize, usize, usize)) -> Result<crate::volume::SubvolumeRange> {
        let pick = |bounds: Option<[usize; 2]>, extent: usize| match bounds {
            Some([lo, hi]) => (lo, hi),
            None => (1, extent),
        };
        let r = crate::volume::SubvolumeRange::new(
            pick(self.x, shape.0),
            pick(self.y, shape.1),
            pick(self.z, shape.2),
        )?;
        r.validate_for(shape)?;
        Ok(r)
    }

    fn check_static(&self, what: &str) -> Result<()> {
        for (name, bounds) in [("x", self.x), ("y", self.y), ("z", self.z)] {
            if let Some([lo, hi]) = bounds {
                if lo < 1 || hi < lo {
                    return Err(Error::Config(format!(
                        "{what}: {name} range [{lo}, {hi}] is not a 1-based inclusive range"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A named volume to score.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeRef {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Scored sub-volume, e.g. only the deepest z slices.
    pub range: RangeSection,
    /// Volumes to score; empty means the split test volume plus the
    /// restored volume.
    pub volumes: Vec<VolumeRef>,
}

/// One quality metric to run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricSpec {
    /// The built-in BRISQUE-style scorer.
    Brisque,
    /// A BRISQUE-style model loaded from a text file.
    BrisqueFile { name: String, path: PathBuf },
    /// Expected defocus level under the Laplacian-variance surrogate
    /// classifier.
    IfqSurrogate,
    /// External scorer invoked per section; stdout must be one number.
    External {
        name: String,
        command: Vec<String>,
        #[serde(default = "default_true")]
        lower_is_better: bool,
        #[serde(default)]
        range: Option<(f64, f64)>,
    },
}

fn default_true() -> bool {
    true
}

impl MetricSpec {
    pub fn name(&self) -> &str {
        match self {
            MetricSpec::Brisque => "brisque",
            MetricSpec::BrisqueFile { name, .. } => name,
            MetricSpec::IfqSurrogate => "ifq-surrogate",
            MetricSpec::External { name, .. } => name,
        }
    }
}

/// Inputs for the `make-synthetic` stage. Seeds inside are ignored: both
/// are derived from the experiment seed.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    pub phantom: PhantomConfig,
    pub degrade: DegradeConfig,
}

fn default_metrics() -> Vec<MetricSpec> {
    vec![MetricSpec::Brisque, MetricSpec::IfqSurrogate]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub input: InputSection,
    #[serde(default)]
    pub split: Option<DatasetSplit>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub fusion: FusionWeights,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricSpec>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub restore: RestoreSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub synthetic: Option<SyntheticSection>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path, overrides: &CliOverrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_relative(dir);
        }
        if let Some(seed) = overrides.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &overrides.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Anchors every relative path at `base` (the config file's directory).
    fn resolve_relative(&mut self, base: &Path) {
        let anchor = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        anchor(&mut self.out_dir);
        for slot in [
            &mut self.input.volume,
            &mut self.input.blurred,
            &mut self.input.clean,
            &mut self.input.test,
            &mut self.restore.checkpoints.xy,
            &mut self.restore.checkpoints.xz,
            &mut self.restore.checkpoints.yz,
        ] {
            if let Some(p) = slot {
                anchor(p);
            }
        }
        for vr in &mut self.evaluate.volumes {
            anchor(&mut vr.path);
        }
        for m in &mut self.metrics {
            if let MetricSpec::BrisqueFile { path, .. } = m {
                anchor(path);
            }
        }
    }

    pub fn input_mode(&self) -> Result<InputMode> {
        let direct = [&self.input.blurred, &self.input.clean, &self.input.test];
        let n_direct = direct.iter().filter(|p| p.is_some()).count();
        let modes = [
            self.input.volume.is_some(),
            n_direct > 0,
            self.input.synthetic,
        ];
        match modes.iter().filter(|m| **m).count() {
            0 => Err(Error::Config(
                "[input] must set `volume`, or `blurred`/`clean`/`test`, or `synthetic = true`"
                    .into(),
            )),
            1 if self.input.volume.is_some() => Ok(InputMode::Split),
            1 if self.input.synthetic => Ok(InputMode::Synthetic),
            1 if n_direct == 3 => Ok(InputMode::Direct),
            1 => Err(Error::Config(
                "[input] direct mode needs all three of `blurred`, `clean`, `test`".into(),
            )),
            _ => Err(Error::Config(
                "[input] mixes modes; set exactly one of `volume`, the blurred/clean/test \
                 triple, or `synthetic = true`"
                    .into(),
            )),
        }
    }

    /// The fully resolved per-axis training config. Its seed is derived
    /// from the experiment seed unless overridden; the checkpoint
    /// directory is always stage-managed.
    pub fn train_config(&self, axis: SliceAxis) -> TrainConfig {
        let mut cfg = TrainConfig::default_for_axis(axis);
        cfg.seed = derive_seed(self.seed, &format!("train/{}", axis.as_str()));
        self.train.all.apply(&mut cfg);
        self.train.for_axis(axis).apply(&mut cfg);
        cfg.checkpoint_dir = None;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_dir.as_os_str().is_empty() {
            return Err(Error::Config("out_dir must not be empty".into()));
        }
        let mode = self.input_mode()?;
        match mode {
            InputMode::Split => match &self.split {
                None => {
                    return Err(Error::Config(
                        "[input] volume mode needs a [split] section".into(),
                    ))
                }
                Some(split) => split.validate_ranges()?,
            },
            InputMode::Direct | InputMode::Synthetic => {
                if self.split.is_some() {
                    return Err(Error::Config(
                        "[split] only applies when [input] sets `volume`".into(),
                    ));
                }
            }
        }
        if mode == InputMode::Synthetic && self.synthetic.is_none() {
            return Err(Error::Config(
                "[input] synthetic = true needs a [synthetic] section".into(),
            ));
        }
        for (what, path) in [
            ("input volume", &self.input.volume),
            ("input blurred volume", &self.input.blurred),
            ("input clean volume", &self.input.clean),
            ("input test volume", &self.input.test),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(Error::Config(format!(
                        "{what} '{}' does not exist",
                        p.display()
                    )));
                }
            }
        }

        self.output.depth()?;
        if let Some(tile) = &self.restore.tile {
            if tile.side == 0 || tile.side % 4 != 0 || tile.overlap >= tile.side {
                return Err(Error::Config(format!(
                    "restore tile side must be a positive multiple of 4 exceeding the overlap, \
                     got side {} overlap {}",
                    tile.side, tile.overlap
                )));
            }
        }
        if let Some(syn) = &self.synthetic {
            syn.phantom.validate()?;
            syn.degrade.validate()?;
        }
        self.evaluate.range.check_static("[evaluate] range")?;
        for vr in &self.evaluate.volumes {
            if vr.name.is_empty() {
                return Err(Error::Config("[evaluate] volume names must be nonempty".into()));
            }
        }

        let mut names = BTreeSet::new();
        for m in &self.metrics {
            if !names.insert(m.name().to_string()) {
                return Err(Error::Config(format!("duplicate metric name '{}'", m.name())));
            }
            match m {
                MetricSpec::BrisqueFile { path, .. } => {
                    if !path.is_file() {
                        return Err(Error::Config(format!(
                            "metric model '{}' does not exist",
                            path.display()
                        )));
                    }
                }
                MetricSpec::External { name, command, .. } => {
                    if command.is_empty() {
                        return Err(Error::Config(format!(
                            "external metric '{name}' has an empty command"
                        )));
                    }
                }
                _ => {}
            }
        }

        for axis in SliceAxis::ALL {
            self.train_config(axis).validate()?;
        }
        // Patch fit is checkable early when the section dims are known
        // from the config itself.
        match mode {
            InputMode::Split => {
                let split = self.split.as_ref().expect("checked above");
                for (domain, range) in [("blurred", &split.blurred), ("clean", &split.clean)] {
                    self.check_patch_fit(domain, range.extent())?;
                }
            }
            InputMode::Synthetic => {
                let shape = self.synthetic.as_ref().expect("checked above").phantom.shape;
                for domain in ["blurred", "clean"] {
                    self.check_patch_fit(domain, shape)?;
                }
            }
            InputMode::Direct => {} // shapes known only once loaded
        }
        Ok(())
    }

    fn check_patch_fit(&self, domain: &str, extent: (usize, usize, usize)) -> Result<()> {
        let (x, y, z) = extent;
        for axis in SliceAxis::ALL {
            let (h, w) = match axis {
                SliceAxis::Xy => (y, x),
                SliceAxis::Xz => (z, x),
                SliceAxis::Yz => (z, y),
            };
            let patch = self.train_config(axis).patch;
            if patch.0 > h || patch.1 > w {
                return Err(Error::Config(format!(
                    "{} patch {}x{} does not fit the {domain} domain's {} sections ({w}x{h})",
                    axis.as_str(),
                    patch.1,
                    patch.0,
                    axis.as_str(),
                )));
            }
        }
        Ok(())
    }
}
