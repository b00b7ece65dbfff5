//! The staged workflow: split, per-axis training, restoration + fusion,
//! and evaluation, each writing into a content-addressed directory under
//! the experiment root so differently-configured runs never mix.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{Error, Result};
use crate::infer::{
    fuse_volumes, restore_volume_axis_with, AxisGenerator, InferOptions,
};
use crate::iqa::{
    evaluate_volumes, BrisqueMetric, BrisqueModel, ExternalCommandMetric, IfqMetric,
    LaplacianSurrogate, Metric,
};
use crate::phantom::{degrade_volume, generate_phantom};
use crate::section::{extract_sections, SliceAxis};
use crate::spcyclegan::{checkpoint_name, derive_seed, resume_train, train};
use crate::volume::{
    crop_subvolume, load_volume, save_volume, split_training_volumes, Volume,
};

use super::config::{
    format_for_path, CliOverrides, ExperimentConfig, InputMode, MetricSpec,
};
use super::manifest::{
    code_version, peak_rss_kb, ExperimentManifest, StageClock, StageKey, StageManifest,
    StageSummary,
};

/// What a finished stage left behind.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    /// Manifest key, e.g. "split" or "train-xy".
    pub stage: String,
    pub dir: PathBuf,
    pub hash: String,
    pub outputs: BTreeMap<String, PathBuf>,
    pub wall_ms: u128,
    pub peak_rss_kb: Option<u64>,
}

/// A validated experiment bound to its output root.
pub struct Experiment {
    cfg: ExperimentConfig,
}

impl Experiment {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Experiment { cfg })
    }

    pub fn open(path: &Path, overrides: &CliOverrides) -> Result<Self> {
        Ok(Experiment { cfg: ExperimentConfig::from_file(path, overrides)? })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn root(&self) -> &Path {
        &self.cfg.out_dir
    }

    // ---- stage identities ----------------------------------------------

    pub(crate) fn synthetic_key(&self) -> Result<StageKey> {
        let syn = self.cfg.synthetic.as_ref().ok_or_else(|| {
            Error::Config("make-synthetic needs a [synthetic] section".into())
        })?;
        Ok(StageKey::new(
            "make-synthetic",
            &json!({
                "synthetic": syn,
                "seed": self.cfg.seed,
                "output": self.cfg.output,
            }),
        ))
    }

    pub(crate) fn split_key(&self) -> Result<StageKey> {
        let input = match self.cfg.input_mode()? {
            InputMode::Split => json!({
                "volume": self.cfg.input.volume,
                "format": self.cfg.input.format,
                "split": self.cfg.split,
            }),
            InputMode::Direct => json!({
                "blurred": self.cfg.input.blurred,
                "clean": self.cfg.input.clean,
                "test": self.cfg.input.test,
                "format": self.cfg.input.format,
            }),
            InputMode::Synthetic => json!({ "synthetic": self.synthetic_key()?.hash }),
        };
        Ok(StageKey::new("split", &json!({ "input": input, "output": self.cfg.output })))
    }

    pub(crate) fn train_key(&self, axis: SliceAxis) -> Result<StageKey> {
        Ok(StageKey::new(
            &format!("train-{}", axis.as_str()),
            &json!({
                "split": self.split_key()?.hash,
                "axis": axis.as_str(),
                "train": self.cfg.train_config(axis),
            }),
        ))
    }

    /// Checkpoint source for one axis: `None` when its fusion weight is
    /// zero, otherwise the explicit override or the train stage's final
    /// checkpoint.
    fn checkpoint_source(&self, axis: SliceAxis, weight: f64) -> Result<Option<PathBuf>> {
        if weight == 0.0 {
            return Ok(None);
        }
        if let Some(path) = self.cfg.restore.checkpoints.for_axis(axis) {
            return Ok(Some(path.clone()));
        }
        let key = self.train_key(axis)?;
        let total = self.cfg.train_config(axis).total_epochs();
        Ok(Some(key.dir(self.root()).join(checkpoint_name(total))))
    }

    pub(crate) fn restore_key(&self) -> Result<StageKey> {
        let weights = self.cfg.fusion.as_array();
        let mut sources = Vec::new();
        for (axis, w) in SliceAxis::ALL.into_iter().zip(weights) {
            sources.push(json!({
                "axis": axis.as_str(),
                "checkpoint": self.checkpoint_source(axis, w)?,
            }));
        }
        Ok(StageKey::new(
            "restore",
            &json!({
                "split": self.split_key()?.hash,
                "sources": sources,
                "weights": weights,
                "tile": self.cfg.restore.tile,
                "dump_axis_outputs": self.cfg.restore.dump_axis_outputs,
                "output": self.cfg.output,
            }),
        ))
    }

    // ---- commands --------------------------------------------------------

    /// Generates the synthetic trio: a degraded phantom (`blurred`, the A
    /// domain and test volume), an independent clean phantom (`clean`, the
    /// B domain), and the undegraded counterpart of `blurred`
    /// (`reference`, for inspection only).
    pub fn cmd_make_synthetic(&self) -> Result<StageOutcome> {
        self.cfg.validate()?;
        let key = self.synthetic_key()?;
        let syn = self.cfg.synthetic.as_ref().expect("key construction checked");
        let clock = StageClock::start();

        let mut blurred_recipe = syn.phantom.clone();
        blurred_recipe.seed = derive_seed(self.cfg.seed, "synthetic/blurred-content");
        let mut clean_recipe = syn.phantom.clone();
        clean_recipe.seed = derive_seed(self.cfg.seed, "synthetic/clean-content");
        let mut degrade = syn.degrade.clone();
        degrade.seed = derive_seed(self.cfg.seed, "synthetic/degrade");

        let reference = generate_phantom(&blurred_recipe)?;
        let blurred = degrade_volume(&reference, &degrade)?;
        let clean = generate_phantom(&clean_recipe)?;

        let dir = self.fresh_stage_dir(&key)?;
        let mut outputs = BTreeMap::new();
        for (name, vol) in [("blurred", &blurred), ("clean", &clean), ("reference", &reference)] {
            outputs.insert(name.to_string(), self.write_volume(vol, &dir, name)?);
        }
        self.finish_stage(
            &key,
            clock,
            BTreeMap::new(),
            outputs,
            json!({ "synthetic": syn, "seed": self.cfg.seed }),
        )
    }

    /// Materializes the blurred/clean/test working volumes: cropped from
    /// one source volume, copied from three given volumes, or taken from
    /// the synthetic stage.
    pub fn cmd_split(&self) -> Result<StageOutcome> {
        self.cfg.validate()?;
        let key = self.split_key()?;
        let clock = StageClock::start();
        let mut inputs = BTreeMap::new();

        let (blurred, clean, test) = match self.cfg.input_mode()? {
            InputMode::Split => {
                let path = self.cfg.input.volume.as_ref().expect("split mode");
                let split = self.cfg.split.as_ref().expect("validated");
                inputs.insert("volume".into(), path.display().to_string());
                let source = load_volume(path, self.cfg.input.format.volume_format())?;
                split_training_volumes(&source, split)?
            }
            InputMode::Direct => {
                let fmt = self.cfg.input.format.volume_format();
                let b = self.cfg.input.blurred.as_ref().expect("direct mode");
                let c = self.cfg.input.clean.as_ref().expect("direct mode");
                let t = self.cfg.input.test.as_ref().expect("direct mode");
                inputs.insert("blurred".into(), b.display().to_string());
                inputs.insert("clean".into(), c.display().to_string());
                inputs.insert("test".into(), t.display().to_string());
                (load_volume(b, fmt)?, load_volume(c, fmt)?, load_volume(t, fmt)?)
            }
            InputMode::Synthetic => {
                let syn_key = self.synthetic_key()?;
                let syn_dir = syn_key.dir(self.root());
                inputs.insert("synthetic".into(), syn_key.hash.clone());
                let path = |name: &str| {
                    let p = self.artifact_path(&syn_dir, name);
                    if p.is_file() {
                        Ok(p)
                    } else {
                        Err(Error::Stage {
                            stage: "split".into(),
                            message: format!(
                                "synthetic volume '{}' is missing; run make-synthetic first",
                                p.display()
                            ),
                        })
                    }
                };
                let fmt = self.cfg.output.format.volume_format();
                let blurred = load_volume(&path("blurred")?, fmt)?;
                let clean = load_volume(&path("clean")?, fmt)?;
                let test = blurred.clone();
                (blurred, clean, test)
            }
        };

        let dir = self.fresh_stage_dir(&key)?;
        let mut outputs = BTreeMap::new();
        for (name, vol) in [("blurred", &blurred), ("clean", &clean), ("test", &test)] {
            outputs.insert(name.to_string(), self.write_volume(vol, &dir, name)?);
        }
        self.finish_stage(
            &key,
            clock,
            inputs,
            outputs,
            json!({ "input": self.cfg.input, "split": self.cfg.split, "output": self.cfg.output }),
        )
    }

    /// The split stage's artifacts, verified present.
    fn require_split(
        &self,
        caller: &str,
    ) -> Result<(StageKey, BTreeMap<&'static str, PathBuf>)> {
        let key = self.split_key()?;
        let dir = key.dir(self.root());
        let mut paths = BTreeMap::new();
        for name in ["blurred", "clean", "test"] {
            let p = self.artifact_path(&dir, name);
            if !p.is_file() {
                return Err(Error::Stage {
                    stage: caller.into(),
                    message: format!(
                        "split volume '{}' is missing; run split first",
                        p.display()
                    ),
                });
            }
            paths.insert(name, p);
        }
        Ok((key, paths))
    }

    /// Trains the requested axes in order. With `resume`, an existing
    /// partial run continues from its latest checkpoint and a finished run
    /// is left untouched; otherwise the stage directory is rebuilt from
    /// scratch.
    pub fn cmd_train(&self, axes: &[SliceAxis], resume: bool) -> Result<Vec<StageOutcome>> {
        self.cfg.validate()?;
        let (split_key, split_paths) = self.require_split("train")?;
        let fmt = self.cfg.output.format.volume_format();
        let blurred = load_volume(&split_paths["blurred"], fmt)?;
        let clean = load_volume(&split_paths["clean"], fmt)?;

        let mut outcomes = Vec::with_capacity(axes.len());
        for &axis in axes {
            let key = self.train_key(axis)?;
            let dir = key.dir(self.root());
            let mut tcfg = self.cfg.train_config(axis);
            let total = tcfg.total_epochs();
            let clock = StageClock::start();

            let stack_a = extract_sections(&blurred, axis);
            let stack_b = extract_sections(&clean, axis);

            let resume_from = if resume { latest_checkpoint(&dir) } else { None };
            match resume_from {
                Some((epoch, _)) if epoch >= total => {
                    log::info!(
                        "train-{}: checkpoint at epoch {epoch} already complete",
                        axis.as_str()
                    );
                }
                Some((epoch, ckpt)) => {
                    log::info!("train-{}: resuming after epoch {epoch}", axis.as_str());
                    tcfg.checkpoint_dir = Some(dir.clone());
                    resume_train::<f32>(&stack_a, &stack_b, &tcfg, &ckpt)?;
                }
                None => {
                    let dir = self.fresh_stage_dir(&key)?;
                    tcfg.checkpoint_dir = Some(dir);
                    train::<f32>(&stack_a, &stack_b, &tcfg)?;
                }
            }

            let final_ckpt = dir.join(checkpoint_name(total));
            if !final_ckpt.is_file() {
                return Err(Error::Stage {
                    stage: key.name.clone(),
                    message: format!("training ended without '{}'", final_ckpt.display()),
                });
            }
            let mut outputs = BTreeMap::new();
            outputs.insert("checkpoint".to_string(), final_ckpt);
            outputs.insert("history".to_string(), dir.join("history.csv"));
            let inputs =
                BTreeMap::from([("split".to_string(), split_key.hash.clone())]);
            outcomes.push(self.finish_stage(
                &key,
                clock,
                inputs,
                outputs,
                json!({ "axis": axis.as_str(), "train": tcfg }),
            )?);
        }
        Ok(outcomes)
    }

    /// Restores the test volume along every positively weighted axis and
    /// fuses the results.
    pub fn cmd_restore(&self) -> Result<StageOutcome> {
        self.cfg.validate()?;
        let key = self.restore_key()?;
        let (split_key, split_paths) = self.require_split("restore")?;
        let clock = StageClock::start();

        let mut inputs = BTreeMap::from([("split".to_string(), split_key.hash)]);
        let weights = self.cfg.fusion.as_array();
        let mut generators: Vec<Option<AxisGenerator>> = Vec::with_capacity(3);
        for (axis, w) in SliceAxis::ALL.into_iter().zip(weights) {
            match self.checkpoint_source(axis, w)? {
                None => generators.push(None),
                Some(path) => {
                    if !path.is_file() {
                        return Err(Error::Stage {
                            stage: "restore".into(),
                            message: format!(
                                "missing {} checkpoint '{}'; train that axis or zero its \
                                 fusion weight",
                                axis.as_str(),
                                path.display()
                            ),
                        });
                    }
                    let gen = AxisGenerator::from_checkpoint(&path)?;
                    if gen.axis != axis {
                        return Err(Error::AxisMismatch {
                            expected: axis.as_str().into(),
                            actual: gen.axis.as_str().into(),
                        });
                    }
                    inputs.insert(
                        format!("checkpoint_{}", axis.as_str()),
                        path.display().to_string(),
                    );
                    generators.push(Some(gen));
                }
            }
        }

        let test = load_volume(&split_paths["test"], self.cfg.output.format.volume_format())?;
        let opts = InferOptions { tile: self.cfg.restore.tile };
        let mut restored: Vec<Option<Volume>> = Vec::with_capacity(3);
        for (axis, gen) in SliceAxis::ALL.into_iter().zip(&generators) {
            restored.push(match gen {
                Some(g) => Some(restore_volume_axis_with(g, &test, axis, &opts)?),
                None => None,
            });
        }
        // Zero-weight slots contribute nothing to the fusion; the test
        // volume stands in purely for its shape.
        let pick = |i: usize| restored[i].as_ref().unwrap_or(&test);
        let fused = fuse_volumes(pick(0), pick(1), pick(2), &self.cfg.fusion)?;

        let dir = self.fresh_stage_dir(&key)?;
        let mut outputs = BTreeMap::new();
        outputs.insert("restored".to_string(), self.write_volume(&fused, &dir, "restored")?);
        if self.cfg.restore.dump_axis_outputs {
            for (axis, vol) in SliceAxis::ALL.into_iter().zip(&restored) {
                if let Some(v) = vol {
                    let name = format!("restored_{}", axis.as_str());
                    outputs.insert(name.clone(), self.write_volume(v, &dir, &name)?);
                }
            }
        }
        self.finish_stage(
            &key,
            clock,
            inputs,
            outputs,
            json!({
                "weights": weights,
                "tile": self.cfg.restore.tile,
                "dump_axis_outputs": self.cfg.restore.dump_axis_outputs,
            }),
        )
    }

    /// Scores the given `name=path` volumes (or, by default, the split
    /// test volume against the restored one) with the configured metrics.
    /// An optional `[evaluate] range` restricts scoring to a sub-volume.
    /// Metric adapters that fail to load are reported and skipped; the
    /// remaining metrics still run.
    pub fn cmd_evaluate(&self, volumes: &[(String, PathBuf)]) -> Result<StageOutcome> {
        self.cfg.validate()?;
        let resolved = self.evaluate_volume_list(volumes)?;
        {
            let mut seen = std::collections::BTreeSet::new();
            for (name, _) in &resolved {
                if !seen.insert(name.clone()) {
                    return Err(Error::Config(format!("duplicate volume name '{name}'")));
                }
            }
        }
        let key = StageKey::new(
            "evaluate",
            &json!({
                "volumes": resolved
                    .iter()
                    .map(|(n, p)| json!({ "name": n, "path": p }))
                    .collect::<Vec<_>>(),
                "range": self.cfg.evaluate.range,
                "metrics": self.cfg.metrics,
            }),
        );
        let clock = StageClock::start();

        let (metrics, failures) = self.resolve_metrics();
        for (name, error) in &failures {
            log::warn!("metric '{name}' skipped: {error}");
        }
        if metrics.is_empty() {
            return Err(Error::Stage {
                stage: "evaluate".into(),
                message: format!(
                    "no usable metrics: {}",
                    failures
                        .iter()
                        .map(|(n, e)| format!("{n}: {e}"))
                        .collect::<Vec<_>>()
                        .join("; ")
                ),
            });
        }

        let mut loaded = Vec::with_capacity(resolved.len());
        for (name, path) in &resolved {
            let mut vol = load_volume(path, format_for_path(path)?)?;
            if !self.cfg.evaluate.range.is_full() {
                let range = self.cfg.evaluate.range.resolve(vol.shape())?;
                vol = crop_subvolume(&vol, &range)?;
            }
            loaded.push((name.clone(), vol));
        }
        let pairs: Vec<(String, &Volume)> =
            loaded.iter().map(|(n, v)| (n.clone(), v)).collect();
        let metric_refs: Vec<&dyn Metric> = metrics.iter().map(|m| m.as_ref()).collect();
        let report = evaluate_volumes(&pairs, &metric_refs, &key.hash)?;

        let dir = self.fresh_stage_dir(&key)?;
        let mut text = report.aligned_text();
        if !failures.is_empty() {
            text.push_str("\nskipped metrics:\n");
            for (name, error) in &failures {
                text.push_str(&format!("  {name}: {error}\n"));
            }
        }
        let mut outputs = BTreeMap::new();
        for (name, file, contents) in [
            ("report_csv", "report.csv", report.table_csv()),
            ("detail_csv", "detail.csv", report.detail_csv()),
            ("report_text", "report.txt", text),
        ] {
            let path = dir.join(file);
            fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
            outputs.insert(name.to_string(), path);
        }

        let inputs = resolved
            .iter()
            .map(|(n, p)| (format!("volume_{n}"), p.display().to_string()))
            .collect();
        self.finish_stage(
            &key,
            clock,
            inputs,
            outputs,
            json!({
                "range": self.cfg.evaluate.range,
                "metrics": self.cfg.metrics,
                "metric_failures": failures
                    .iter()
                    .map(|(n, e)| json!({ "name": n, "error": e }))
                    .collect::<Vec<_>>(),
            }),
        )
    }

    /// Writes a human-readable summary of everything recorded in the
    /// experiment manifest.
    pub fn cmd_report(&self) -> Result<PathBuf> {
        let manifest = ExperimentManifest::load(self.root())?;
        if manifest.stages.is_empty() {
            return Err(Error::Stage {
                stage: "report".into(),
                message: format!(
                    "no stages recorded under '{}'; run the pipeline first",
                    self.root().display()
                ),
            });
        }
        let mut text = String::new();
        text.push_str(&format!("experiment: {}\n", self.root().display()));
        text.push_str(&format!("code:       {}\n\n", manifest.code_version));
        text.push_str(&format!(
            "{:<14} {:<28} {:>10} {:>12}\n",
            "stage", "directory", "wall_ms", "peak_rss_kb"
        ));
        for (name, stage) in &manifest.stages {
            let peak = stage
                .peak_rss_kb
                .map(|kb| kb.to_string())
                .unwrap_or_else(|| "-".into());
            text.push_str(&format!(
                "{:<14} {:<28} {:>10} {:>12}\n",
                name, stage.dir, stage.wall_ms, peak
            ));
        }
        if let Some(eval) = manifest.stages.get("evaluate") {
            if let Some(rel) = eval.outputs.get("report_text") {
                let path = self.root().join(rel);
                if let Ok(body) = fs::read_to_string(&path) {
                    text.push_str("\nevaluation\n----------\n");
                    text.push_str(&body);
                }
            }
        }
        let path = self.root().join("report.txt");
        fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
        log::info!("report: wrote {}", path.display());
        Ok(path)
    }

    // ---- helpers ---------------------------------------------------------

    /// Default evaluation pair: the degraded test volume vs the restored
    /// output.
    fn evaluate_volume_list(
        &self,
        volumes: &[(String, PathBuf)],
    ) -> Result<Vec<(String, PathBuf)>> {
        if !volumes.is_empty() {
            for (_, path) in volumes {
                if !path.is_file() {
                    return Err(Error::Config(format!(
                        "volume '{}' does not exist",
                        path.display()
                    )));
                }
            }
            return Ok(volumes.to_vec());
        }
        if !self.cfg.evaluate.volumes.is_empty() {
            for vr in &self.cfg.evaluate.volumes {
                if !vr.path.is_file() {
                    return Err(Error::Config(format!(
                        "[evaluate] volume '{}' does not exist",
                        vr.path.display()
                    )));
                }
            }
            return Ok(self
                .cfg
                .evaluate
                .volumes
                .iter()
                .map(|vr| (vr.name.clone(), vr.path.clone()))
                .collect());
        }
        let (_, split_paths) = self.require_split("evaluate")?;
        let restored = self
            .artifact_path(&self.restore_key()?.dir(self.root()), "restored");
        if !restored.is_file() {
            return Err(Error::Stage {
                stage: "evaluate".into(),
                message: format!(
                    "restored volume '{}' is missing; run restore first or name volumes \
                     explicitly",
                    restored.display()
                ),
            });
        }
        Ok(vec![
            ("degraded".to_string(), split_paths["test"].clone()),
            ("restored".to_string(), restored),
        ])
    }

    fn resolve_metrics(&self) -> (Vec<Box<dyn Metric>>, Vec<(String, String)>) {
        let mut metrics: Vec<Box<dyn Metric>> = Vec::new();
        let mut failures = Vec::new();
        for spec in &self.cfg.metrics {
            match spec {
                MetricSpec::Brisque => {
                    metrics.push(Box::new(BrisqueMetric { model: BrisqueModel::builtin() }));
                }
                MetricSpec::BrisqueFile { name, path } => match BrisqueModel::load(path) {
                    Ok(model) => metrics.push(Box::new(NamedMetric {
                        name: name.clone(),
                        inner: BrisqueMetric { model },
                    })),
                    Err(e) => failures.push((name.clone(), e.to_string())),
                },
                MetricSpec::IfqSurrogate => {
                    metrics.push(Box::new(IfqMetric {
                        classifier: Box::new(LaplacianSurrogate::default()),
                    }));
                }
                MetricSpec::External { name, command, lower_is_better, range } => {
                    metrics.push(Box::new(ExternalCommandMetric {
                        name: name.clone(),
                        command: command.clone(),
                        lower_is_better: *lower_is_better,
                        range: range.unwrap_or((f64::MIN, f64::MAX)),
                    }));
                }
            }
        }
        (metrics, failures)
    }

    fn artifact_path(&self, dir: &Path, name: &str) -> PathBuf {
        dir.join(format!("{name}.{}", self.cfg.output.format.extension()))
    }

    fn write_volume(&self, v: &Volume, dir: &Path, name: &str) -> Result<PathBuf> {
        let path = self.artifact_path(dir, name);
        save_volume(v, &path, self.cfg.output.format.volume_format(), self.cfg.output.depth()?)?;
        Ok(path)
    }

    /// Recreates the stage directory empty, so re-runs overwrite rather
    /// than accumulate.
    fn fresh_stage_dir(&self, key: &StageKey) -> Result<PathBuf> {
        let dir = key.dir(self.root());
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    /// Writes the stage manifest, folds the stage into the experiment
    /// manifest, and logs the stage's cost.
    fn finish_stage(
        &self,
        key: &StageKey,
        clock: StageClock,
        inputs: BTreeMap<String, String>,
        outputs: BTreeMap<String, PathBuf>,
        config: serde_json::Value,
    ) -> Result<StageOutcome> {
        let dir = key.dir(self.root());
        let wall_ms = clock.wall_ms();
        let peak = peak_rss_kb();

        let rel = |base: &Path, p: &Path| {
            p.strip_prefix(base).unwrap_or(p).display().to_string()
        };
        let manifest = StageManifest {
            stage: key.name.clone(),
            hash: key.hash.clone(),
            code_version: code_version(),
            inputs,
            outputs: outputs.iter().map(|(k, v)| (k.clone(), rel(&dir, v))).collect(),
            wall_ms,
            peak_rss_kb: peak,
            config,
        };
        let manifest_path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;

        let mut experiment = ExperimentManifest::load(self.root())?;
        experiment.code_version = code_version();
        experiment.config =
            serde_json::to_value(&self.cfg).expect("config serializes");
        experiment.stages.insert(
            key.name.clone(),
            StageSummary {
                dir: key.dir_name(),
                hash: key.hash.clone(),
                wall_ms,
                peak_rss_kb: peak,
                outputs: outputs
                    .iter()
                    .map(|(k, v)| (k.clone(), rel(self.root(), v)))
                    .collect(),
            },
        );
        experiment.save(self.root())?;

        log::info!(
            "{}: done in {} ms (peak rss {} kB) -> {}",
            key.name,
            wall_ms,
            peak.map(|kb| kb.to_string()).unwrap_or_else(|| "?".into()),
            dir.display()
        );
        Ok(StageOutcome {
            stage: key.name.clone(),
            dir,
            hash: key.hash.clone(),
            outputs,
            wall_ms,
            peak_rss_kb: peak,
        })
    }
}

/// Highest-numbered checkpoint in a train stage directory.
fn latest_checkpoint(dir: &Path) -> Option<(usize, PathBuf)> {
    let mut best: Option<(usize, PathBuf)> = None;
    for entry in fs::read_dir(dir).ok()?.flatten() {
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let epoch = name
            .strip_prefix("checkpoint_epoch_")
            .and_then(|s| s.strip_suffix(".ckpt"))
            .and_then(|s| s.parse::<usize>().ok());
        if let Some(e) = epoch {
            if best.as_ref().is_none_or(|(b, _)| e > *b) {
                best = Some((e, entry.path()));
            }
        }
    }
    best
}

/// Renames a metric without touching its scoring.
struct NamedMetric<M> {
    name: String,
    inner: M,
}

impl<M: Metric> Metric for NamedMetric<M> {
    fn name(&self) -> &str {
        &self.name
    }

    fn lower_is_better(&self) -> bool {
        self.inner.lower_is_better()
    }

    fn range(&self) -> (f64, f64) {
        self.inner.range()
    }

    fn score(&self, img: &ndarray::ArrayView2<f64>) -> Result<f64> {
        self.inner.score(img)
    }
}
