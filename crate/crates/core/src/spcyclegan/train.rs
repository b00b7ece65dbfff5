//! The per-axis training loop.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array4;
use serde::{Deserialize, Serialize};

use super::arch::{GeneratorKind, NetConfig, ResPad};
use super::checkpoint::{load_matching, save_checkpoint, CheckpointMeta};
use super::loss::{GanMode, LossBreakdown};
use super::models::{
    build_models, discriminator_backward, generator_backward, generator_forward, h_only_backward,
    SpCycleGanModels, TermWeights,
};
use super::pool::ImagePool;
use super::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{Adam, Feat, Scalar};
use crate::section::{sample_patches, PatchSampler, PatchSpec, SectionStack, SliceAxis};

/// When the spatial-constraint network is updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HUpdate {
    /// One step minimizes the full objective over all three generators.
    Joint,
    /// Generators step without the spatial term's gradient; `h` then takes
    /// its own step chasing the current restored images.
    Alternating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lr: f64,
    pub epochs_const: usize,
    pub epochs_decay: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    /// Patch `(height, width)`; both must be multiples of 4.
    pub patch: (usize, usize),
    pub patches_per_section: usize,
    pub gan_mode: GanMode,
    pub pool_size: usize,
    pub seed: u64,
    pub net: NetConfig,
    pub h_update: HUpdate,
    /// Save a checkpoint every N epochs (0: only the final one); effective
    /// only with `checkpoint_dir` set.
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda1: 10.0,
            lambda2: 10.0,
            lr: 2e-4,
            epochs_const: 100,
            epochs_decay: 100,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 1,
            patch: (256, 256),
            patches_per_section: 1,
            gan_mode: GanMode::LeastSquares,
            pool_size: 50,
            seed: 0,
            net: NetConfig::default(),
            h_update: HUpdate::Joint,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl TrainConfig {
    /// Default patch sizes: 256x256 along xy, 200x200 along xz and yz.
    pub fn default_for_axis(axis: SliceAxis) -> Self {
        TrainConfig {
            patch: match axis {
                SliceAxis::Xy => (256, 256),
                SliceAxis::Xz | SliceAxis::Yz => (200, 200),
            },
            ..TrainConfig::default()
        }
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs_const + self.epochs_decay
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(Error::Config("lambda1 and lambda2 must be nonnegative".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.total_epochs() == 0 {
            return Err(Error::Config("epoch count must be at least 1".into()));
        }
        if self.batch_size == 0 || self.patches_per_section == 0 {
            return Err(Error::Config("batch size and patches per section must be >= 1".into()));
        }
        let (ph, pw) = self.patch;
        if ph == 0 || pw == 0 || ph % 4 != 0 || pw % 4 != 0 {
            return Err(Error::Config(format!(
                "patch dims must be positive multiples of 4, got {pw}x{ph}"
            )));
        }
        if self.net.kind == GeneratorKind::Resnet
            && self.net.n_res_blocks > 0
            && self.net.res_pad == ResPad::Reflect
            && ph.min(pw) / 4 < 2
        {
            return Err(Error::Config(
                "reflection-padded residual blocks need patches of at least 8x8".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Learning rate for a 1-based epoch: constant for `epochs_const`, then
/// linearly down to 0 across `epochs_decay`.
pub fn learning_rate(cfg: &TrainConfig, epoch: usize) -> f64 {
    if epoch <= cfg.epochs_const {
        cfg.lr
    } else {
        let past = epoch - cfg.epochs_const;
        if past >= cfg.epochs_decay {
            0.0
        } else {
            cfg.lr * ((cfg.epochs_decay - past) as f64 / cfg.epochs_decay as f64)
        }
    }
}

/// One optimizer per network.
#[derive(Debug, Clone)]
pub struct AdamSet<S> {
    pub g_ab: Adam<S>,
    pub g_ba: Adam<S>,
    pub h: Adam<S>,
    pub d_a: Adam<S>,
    pub d_b: Adam<S>,
}

impl<S: Scalar> AdamSet<S> {
    pub fn new(beta1: f64, beta2: f64) -> Self {
        AdamSet {
            g_ab: Adam::new(beta1, beta2),
            g_ba: Adam::new(beta1, beta2),
            h: Adam::new(beta1, beta2),
            d_a: Adam::new(beta1, beta2),
            d_b: Adam::new(beta1, beta2),
        }
    }
}

/// One appended line of the training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub step: usize,
    pub gan_ab: f64,
    pub gan_ba: f64,
    pub cyc: f64,
    pub spatial: f64,
    pub total: f64,
    pub lr: f64,
}

pub const HISTORY_CSV_HEADER: &str = "epoch,step,gan_ab,gan_ba,cyc,spatial,total,lr";

impl HistoryRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.epoch, self.step, self.gan_ab, self.gan_ba, self.cyc, self.spatial, self.total,
            self.lr
        )
    }
}

/// Appends rows to a CSV file, writing the header first if the file is new.
pub fn append_history_csv(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut buf = String::new();
    if fresh {
        buf.push_str(HISTORY_CSV_HEADER);
        buf.push('\n');
    }
    for row in rows {
        buf.push_str(&row.csv_line());
        buf.push('\n');
    }
    f.write_all(buf.as_bytes()).map_err(|e| Error::io(path, e))
}

pub struct TrainOutcome<S> {
    pub models: SpCycleGanModels<S>,
    pub history: Vec<HistoryRow>,
    pub axis: SliceAxis,
}

fn batch_from<S: Scalar>(
    sampler: &mut PatchSampler<'_>,
    n: usize,
    patch: (usize, usize),
) -> Feat<S> {
    let (ph, pw) = patch;
    let mut out = Array4::zeros((n, 1, ph, pw));
    for i in 0..n {
        let p = sampler.next().expect("sampler is endless");
        let mut slot = out.slice_mut(ndarray::s![i, 0, .., ..]);
        ndarray::Zip::from(&mut slot).and(&p.data).for_each(|o, &v| {
            // [0,1] -> [-1,1]
            *o = S::from_f64c(2.0 * v as f64 - 1.0);
        });
    }
    out
}

fn validate_run(
    stack_a: &SectionStack,
    stack_b: &SectionStack,
    cfg: &TrainConfig,
) -> Result<SliceAxis> {
    cfg.validate()?;
    if stack_a.axis() != stack_b.axis() {
        return Err(Error::AxisMismatch {
            expected: stack_a.axis().as_str().into(),
            actual: stack_b.axis().as_str().into(),
        });
    }
    for (name, st) in [("A", stack_a), ("B", stack_b)] {
        let (h, w) = st.dims();
        if cfg.patch.0 > h || cfg.patch.1 > w {
            return Err(Error::Config(format!(
                "patch {}x{} does not fit domain {name} sections {w}x{h}",
                cfg.patch.1, cfg.patch.0
            )));
        }
    }
    Ok(stack_a.axis())
}

/// Trains the five networks on two section stacks of the same axis.
/// An epoch takes `max(|A|, |B|) * patches_per_section / batch_size` steps,
/// each sampler cycling through its own stack independently. The run is a
/// pure function of the config and stacks.
pub fn train<S: Scalar>(
    stack_a: &SectionStack,
    stack_b: &SectionStack,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    let axis = validate_run(stack_a, stack_b, cfg)?;
    let mut models = build_models::<S>(cfg);
    let mut opts = AdamSet::new(cfg.beta1, cfg.beta2);
    let history = run_epochs(stack_a, stack_b, cfg, axis, &mut models, &mut opts, 1)?;
    Ok(TrainOutcome { models, history, axis })
}

/// Continues a checkpointed run through the remaining epochs. Epoch numbering,
/// the lr schedule, history appending, and checkpoint cadence pick up exactly
/// where the checkpoint stopped; pools and samplers are reseeded from the
/// resume epoch, so a resumed run is deterministic but not sample-for-sample
/// identical to one that never stopped.
pub fn resume_train<S: Scalar>(
    stack_a: &SectionStack,
    stack_b: &SectionStack,
    cfg: &TrainConfig,
    checkpoint: &Path,
) -> Result<TrainOutcome<S>> {
    let axis = validate_run(stack_a, stack_b, cfg)?;
    let (mut models, meta, saved_opts) = load_matching::<S>(checkpoint, &cfg.net)?;
    if meta.gan_mode != cfg.gan_mode {
        return Err(Error::Checkpoint {
            path: checkpoint.to_owned(),
            message: format!(
                "gan mode mismatch: checkpoint has {:?}, config asks for {:?}",
                meta.gan_mode, cfg.gan_mode
            ),
        });
    }
    if let Some(ck_axis) = meta.axis {
        if ck_axis != axis {
            return Err(Error::AxisMismatch {
                expected: axis.as_str().into(),
                actual: ck_axis.as_str().into(),
            });
        }
    }
    if meta.epoch >= cfg.total_epochs() {
        return Err(Error::Config(format!(
            "checkpoint is already at epoch {} of {}; nothing to resume",
            meta.epoch,
            cfg.total_epochs()
        )));
    }
    let mut opts = saved_opts.unwrap_or_else(|| AdamSet::new(cfg.beta1, cfg.beta2));
    let history =
        run_epochs(stack_a, stack_b, cfg, axis, &mut models, &mut opts, meta.epoch + 1)?;
    Ok(TrainOutcome { models, history, axis })
}

fn run_epochs<S: Scalar>(
    stack_a: &SectionStack,
    stack_b: &SectionStack,
    cfg: &TrainConfig,
    axis: SliceAxis,
    models: &mut SpCycleGanModels<S>,
    opts: &mut AdamSet<S>,
    first_epoch: usize,
) -> Result<Vec<HistoryRow>> {
    // Fresh runs keep the historical seed tags; resumes fork the streams.
    let tag = |base: &str| {
        if first_epoch == 1 {
            base.to_string()
        } else {
            format!("{base}@{first_epoch}")
        }
    };
    let mut pool_a = ImagePool::new(cfg.pool_size, derive_seed(cfg.seed, &tag("pool/a")));
    let mut pool_b = ImagePool::new(cfg.pool_size, derive_seed(cfg.seed, &tag("pool/b")));
    let spec = |stack_tag: String| PatchSpec {
        size: cfg.patch,
        count_per_section: cfg.patches_per_section,
        rng_seed: derive_seed(cfg.seed, &stack_tag),
    };
    let mut sampler_a = sample_patches(stack_a, &spec(tag("patches/a")))?;
    let mut sampler_b = sample_patches(stack_b, &spec(tag("patches/b")))?;

    let steps_per_epoch =
        (stack_a.count().max(stack_b.count()) * cfg.patches_per_section / cfg.batch_size).max(1);
    let total_epochs = cfg.total_epochs();
    let mut history = Vec::with_capacity((total_epochs + 1 - first_epoch) * steps_per_epoch);

    for epoch in first_epoch..=total_epochs {
        let lr = learning_rate(cfg, epoch);
        let epoch_start = history.len();
        for step in 1..=steps_per_epoch {
            let a = batch_from::<S>(&mut sampler_a, cfg.batch_size, cfg.patch);
            let b = batch_from::<S>(&mut sampler_b, cfg.batch_size, cfg.patch);
            let breakdown =
                train_step(models, opts, &mut pool_a, &mut pool_b, &a, &b, cfg, lr)
                    .map_err(|e| match e {
                        Error::Divergence(msg) => {
                            Error::Divergence(format!("epoch {epoch} step {step}: {msg}"))
                        }
                        other => other,
                    })?;
            if !breakdown.is_finite() {
                return Err(Error::Divergence(format!(
                    "epoch {epoch} step {step}: non-finite loss {breakdown:?}"
                )));
            }
            history.push(HistoryRow {
                epoch,
                step,
                gan_ab: breakdown.gan_ab,
                gan_ba: breakdown.gan_ba,
                cyc: breakdown.cyc,
                spatial: breakdown.spatial,
                total: breakdown.total,
                lr,
            });
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            append_history_csv(&dir.join("history.csv"), &history[epoch_start..])?;
            let due = cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0;
            if due || epoch == total_epochs {
                let meta = CheckpointMeta::new::<S>(cfg, Some(axis), epoch);
                save_checkpoint(models, &meta, Some(opts), &dir.join(checkpoint_name(epoch)))?;
            }
        }
    }

    Ok(history)
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("checkpoint_epoch_{epoch:04}.ckpt")
}

#[allow(clippy::too_many_arguments)]
fn train_step<S: Scalar>(
    models: &mut SpCycleGanModels<S>,
    opts: &mut AdamSet<S>,
    pool_a: &mut ImagePool<S>,
    pool_b: &mut ImagePool<S>,
    a: &Feat<S>,
    b: &Feat<S>,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<LossBreakdown> {
    models.g_ab.zero_grads();
    models.g_ba.zero_grads();
    models.h.zero_grads();
    let fwd = generator_forward(models, a, b)?;
    let joint = cfg.h_update == HUpdate::Joint;
    let w = TermWeights {
        spatial: if joint { cfg.lambda2 } else { 0.0 },
        ..TermWeights::training(cfg.lambda1, cfg.lambda2)
    };
    let terms = generator_backward(models, &fwd, a, b, &w, cfg.gan_mode)?;
    opts.g_ab.step(&mut models.g_ab, lr);
    opts.g_ba.step(&mut models.g_ba, lr);
    if joint {
        opts.h.step(&mut models.h, lr);
    } else {
        models.h.zero_grads();
        h_only_backward(models, &fwd, a, cfg.lambda2)?;
        opts.h.step(&mut models.h, lr);
    }

    models.d_b.zero_grads();
    let fake_b = pool_b.query(fwd.fake_b.clone());
    discriminator_backward(&mut models.d_b, b, &fake_b, cfg.gan_mode)?;
    opts.d_b.step(&mut models.d_b, lr);

    models.d_a.zero_grads();
    let fake_a = pool_a.query(fwd.fake_a.clone());
    discriminator_backward(&mut models.d_a, a, &fake_a, cfg.gan_mode)?;
    opts.d_a.step(&mut models.d_a, lr);

    Ok(LossBreakdown::from_terms(
        terms.gan_ab,
        terms.gan_ba,
        terms.cyc,
        terms.spatial,
        cfg.lambda1,
        cfg.lambda2,
    ))
}
