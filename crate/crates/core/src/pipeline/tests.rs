use std::fs;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::infer::FusionWeights;
use crate::phantom::{DegradeConfig, PhantomConfig};
use crate::section::SliceAxis;
use crate::spcyclegan::{
    build_models, checkpoint_name, load_checkpoint, CheckpointMeta, GeneratorKind, NetConfig,
    TrainConfig,
};
use crate::volume::{
    load_volume, save_volume, BitDepth, DatasetSplit, SubvolumeRange, Volume, VolumeFormat,
};

use super::config::{
    CliOverrides, ExperimentConfig, InputSection, MetricSpec, RangeSection, SyntheticSection,
    TrainOverride, VolumeRef,
};
use super::manifest::{ExperimentManifest, EXPERIMENT_MANIFEST};
use super::stages::Experiment;

fn dyadic_volume(shape: (usize, usize, usize), seed: u64) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Volume::from_fn(shape, |_, _, _| rng.random_range(0..=256u32) as f32 / 256.0).unwrap()
}

fn save_tiff(v: &Volume, path: &Path) {
    save_volume(v, path, VolumeFormat::TiffStack, BitDepth::Sixteen).unwrap();
}

fn load_tiff(path: &Path) -> Volume {
    load_volume(path, VolumeFormat::TiffStack).unwrap()
}

/// One-epoch toy training that fits 8x8 sections.
fn toy_train() -> TrainOverride {
    TrainOverride {
        epochs_const: Some(1),
        epochs_decay: Some(0),
        patch: Some([8, 8]),
        pool_size: Some(2),
        net: Some(NetConfig::toy()),
        checkpoint_every: Some(1),
        ..TrainOverride::default()
    }
}

fn base_config(out_dir: PathBuf) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed: 7,
        out_dir,
        input: InputSection::default(),
        split: None,
        train: Default::default(),
        fusion: FusionWeights::default(),
        metrics: vec![MetricSpec::Brisque, MetricSpec::IfqSurrogate],
        output: Default::default(),
        restore: Default::default(),
        evaluate: Default::default(),
        synthetic: None,
    };
    cfg.train.all = toy_train();
    cfg
}

/// Writes three dyadic volumes and returns a direct-mode config using them.
fn direct_config(root: &Path, shape: (usize, usize, usize)) -> ExperimentConfig {
    let data = root.join("data");
    fs::create_dir_all(&data).unwrap();
    let write = |name: &str, seed: u64| {
        let path = data.join(format!("{name}.tiff"));
        save_tiff(&dyadic_volume(shape, seed), &path);
        path
    };
    let mut cfg = base_config(root.join("out"));
    cfg.input.blurred = Some(write("blurred", 11));
    cfg.input.clean = Some(write("clean", 22));
    cfg.input.test = Some(write("test", 33));
    cfg
}

/// Checkpoint whose A→B generator is the exact identity.
fn identity_checkpoint(dir: &Path, axis: SliceAxis) -> PathBuf {
    let tcfg = TrainConfig {
        net: NetConfig { kind: GeneratorKind::Identity, ..NetConfig::toy() },
        ..TrainConfig::default_for_axis(axis)
    };
    let models = build_models::<f32>(&tcfg);
    let meta = CheckpointMeta::new::<f32>(&tcfg, Some(axis), 1);
    let path = dir.join(format!("identity_{}.ckpt", axis.as_str()));
    crate::spcyclegan::save_checkpoint(&models, &meta, None, &path).unwrap();
    path
}

fn split_ranges() -> DatasetSplit {
    DatasetSplit {
        blurred: SubvolumeRange::new((1, 16), (1, 16), (1, 8)).unwrap(),
        clean: SubvolumeRange::new((1, 16), (1, 16), (9, 16)).unwrap(),
        test: SubvolumeRange::new((1, 16), (1, 16), (17, 24)).unwrap(),
    }
}

#[test]
fn config_file_resolves_paths_and_applies_cli_overrides() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("data");
    fs::create_dir_all(&data).unwrap();
    save_tiff(&dyadic_volume((16, 16, 24), 5), &data.join("vol.tiff"));
    let cfg_dir = root.path().join("cfg");
    fs::create_dir_all(&cfg_dir).unwrap();
    let toml = r#"
seed = 3
out_dir = "../out"

[input]
volume = "../data/vol.tiff"

[split]
blurred = { x = [1, 16], y = [1, 16], z = [1, 8] }
clean = { x = [1, 16], y = [1, 16], z = [9, 16] }
test = { x = [1, 16], y = [1, 16], z = [17, 24] }

[train]
patch = [8, 8]
epochs_const = 1
epochs_decay = 0
net = { base_features = 2, n_res_blocks = 1, disc_layers = 0, res_pad = "zero" }

[train.xy]
lambda2 = 0.0
"#;
    let file = cfg_dir.join("exp.toml");
    fs::write(&file, toml).unwrap();

    let cfg = ExperimentConfig::from_file(&file, &CliOverrides::default()).unwrap();
    assert_eq!(cfg.seed, 3);
    assert!(cfg.out_dir.is_absolute());
    assert_eq!(cfg.out_dir, cfg_dir.join("../out"));
    assert_eq!(cfg.input.volume.as_deref(), Some(cfg_dir.join("../data/vol.tiff").as_path()));

    // [train] applies everywhere; [train.xy] refines one axis.
    assert_eq!(cfg.train_config(SliceAxis::Xy).patch, (8, 8));
    assert_eq!(cfg.train_config(SliceAxis::Xy).lambda2, 0.0);
    assert_eq!(cfg.train_config(SliceAxis::Xz).lambda2, 10.0);
    // Per-axis seeds are independent streams off the experiment seed.
    assert_ne!(
        cfg.train_config(SliceAxis::Xy).seed,
        cfg.train_config(SliceAxis::Xz).seed
    );

    let over = CliOverrides { seed: Some(9), out: Some(root.path().join("elsewhere")) };
    let cfg2 = ExperimentConfig::from_file(&file, &over).unwrap();
    assert_eq!(cfg2.seed, 9);
    assert_eq!(cfg2.out_dir, root.path().join("elsewhere"));
    // The derived training seeds follow the overridden experiment seed.
    assert_ne!(
        cfg2.train_config(SliceAxis::Xy).seed,
        cfg.train_config(SliceAxis::Xy).seed
    );
}

#[test]
fn config_validation_rejects_invalid_setups() {
    let synthetic = || SyntheticSection {
        phantom: PhantomConfig { shape: (16, 16, 16), ..PhantomConfig::default() },
        degrade: DegradeConfig::default(),
    };
    let valid = || {
        let mut cfg = base_config(PathBuf::from("/nonexistent-out"));
        cfg.input.synthetic = true;
        cfg.synthetic = Some(synthetic());
        cfg
    };
    valid().validate().expect("baseline config is valid");

    // Mixed input modes.
    let mut cfg = valid();
    cfg.input.volume = Some(PathBuf::from("x.tiff"));
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    // Volume mode without [split].
    let mut cfg = base_config(PathBuf::from("/nonexistent-out"));
    cfg.input.volume = Some(PathBuf::from("x.tiff"));
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    // [split] present outside volume mode.
    let mut cfg = valid();
    cfg.split = Some(split_ranges());
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    // Overlapping blurred/clean z ranges are rejected statically.
    let mut cfg = base_config(PathBuf::from("/nonexistent-out"));
    cfg.input.volume = Some(PathBuf::from("x.tiff"));
    let mut split = split_ranges();
    split.clean.z = (5, 12);
    cfg.split = Some(split);
    assert!(matches!(cfg.validate(), Err(Error::InvalidRange(_))));

    // Duplicate metric names.
    let mut cfg = valid();
    cfg.metrics = vec![MetricSpec::Brisque, MetricSpec::Brisque];
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    // Patch dims must be multiples of 4.
    let mut cfg = valid();
    cfg.train.xz.patch = Some([9, 8]);
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    // Patches must fit the sections the split will produce.
    let mut cfg = valid();
    cfg.train.all.patch = Some([32, 32]);
    let err = cfg.validate().unwrap_err();
    assert!(err.to_string().contains("does not fit"), "{err}");

    // Tile geometry.
    let mut cfg = valid();
    cfg.restore.tile = Some(crate::infer::TileConfig { side: 10, overlap: 2 });
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    // Synthetic mode requires its section.
    let mut cfg = valid();
    cfg.synthetic = None;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}

#[test]
fn split_crops_match_the_source_and_rerun_byte_identically() {
    let root = tempfile::tempdir().unwrap();
    let vol_path = root.path().join("vol.tiff");
    save_tiff(&dyadic_volume((16, 16, 24), 5), &vol_path);
    let mut cfg = base_config(root.path().join("out"));
    cfg.input.volume = Some(vol_path.clone());
    cfg.split = Some(split_ranges());

    let exp = Experiment::new(cfg).unwrap();
    let outcome = exp.cmd_split().unwrap();
    assert_eq!(outcome.stage, "split");
    assert!(outcome.dir.ends_with(format!("split-{}", outcome.hash)));

    let src = load_tiff(&vol_path);
    let blurred = load_tiff(&outcome.outputs["blurred"]);
    let clean = load_tiff(&outcome.outputs["clean"]);
    let test = load_tiff(&outcome.outputs["test"]);
    assert_eq!(blurred.shape(), (16, 16, 8));
    for z in 0..8 {
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(blurred.at(x, y, z), src.at(x, y, z));
                assert_eq!(clean.at(x, y, z), src.at(x, y, z + 8));
                assert_eq!(test.at(x, y, z), src.at(x, y, z + 16));
            }
        }
    }

    let before: Vec<Vec<u8>> = ["blurred", "clean", "test"]
        .iter()
        .map(|n| fs::read(&outcome.outputs[*n]).unwrap())
        .collect();
    let outcome2 = exp.cmd_split().unwrap();
    assert_eq!(outcome2.hash, outcome.hash);
    for (n, old) in ["blurred", "clean", "test"].iter().zip(&before) {
        assert_eq!(&fs::read(&outcome2.outputs[*n]).unwrap(), old);
    }

    let manifest = ExperimentManifest::load(exp.root()).unwrap();
    assert!(manifest.stages.contains_key("split"));
    assert!(exp.root().join(EXPERIMENT_MANIFEST).is_file());
    assert!(outcome.dir.join("manifest.json").is_file());
}

#[test]
fn split_failures_leave_the_output_root_untouched() {
    let root = tempfile::tempdir().unwrap();
    let vol_path = root.path().join("vol.tiff");
    save_tiff(&dyadic_volume((16, 16, 24), 5), &vol_path);
    let mut cfg = base_config(root.path().join("out"));
    cfg.input.volume = Some(vol_path);
    let mut split = split_ranges();
    split.test.z = (17, 40); // beyond the source's 24 slices
    cfg.split = Some(split);

    let exp = Experiment::new(cfg).unwrap();
    let err = exp.cmd_split().unwrap_err();
    assert!(matches!(err, Error::InvalidRange(_)), "{err}");
    assert!(!exp.root().exists(), "failed split must not create any output");
}

#[test]
fn direct_mode_materializes_the_three_volumes() {
    let root = tempfile::tempdir().unwrap();
    let cfg = direct_config(root.path(), (8, 8, 8));
    let inputs = [
        cfg.input.blurred.clone().unwrap(),
        cfg.input.clean.clone().unwrap(),
        cfg.input.test.clone().unwrap(),
    ];
    let exp = Experiment::new(cfg).unwrap();
    let outcome = exp.cmd_split().unwrap();
    for (name, input) in ["blurred", "clean", "test"].iter().zip(&inputs) {
        assert_eq!(
            fs::read(&outcome.outputs[*name]).unwrap(),
            fs::read(input).unwrap(),
            "{name} must be copied verbatim"
        );
    }
}

#[test]
fn make_synthetic_feeds_split_with_blurred_as_test() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = base_config(root.path().join("out"));
    cfg.input.synthetic = true;
    cfg.synthetic = Some(SyntheticSection {
        phantom: PhantomConfig {
            shape: (16, 16, 16),
            ellipsoids: 3,
            tubes: 1,
            ..PhantomConfig::default()
        },
        degrade: DegradeConfig::default(),
    });

    let exp = Experiment::new(cfg).unwrap();
    let made = exp.cmd_make_synthetic().unwrap();
    let blurred = load_tiff(&made.outputs["blurred"]);
    let reference = load_tiff(&made.outputs["reference"]);
    let clean = load_tiff(&made.outputs["clean"]);
    assert_ne!(blurred, reference, "degradation must change the phantom");
    assert_ne!(clean, reference, "the clean domain is an independent phantom");

    let split = exp.cmd_split().unwrap();
    assert_eq!(
        fs::read(&split.outputs["test"]).unwrap(),
        fs::read(&split.outputs["blurred"]).unwrap(),
        "synthetic mode reuses the degraded phantom as the test volume"
    );

    // Regenerating is deterministic.
    let bytes = fs::read(&made.outputs["blurred"]).unwrap();
    let made2 = exp.cmd_make_synthetic().unwrap();
    assert_eq!(fs::read(&made2.outputs["blurred"]).unwrap(), bytes);
}

#[test]
fn split_refuses_synthetic_mode_before_make_synthetic_ran() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = base_config(root.path().join("out"));
    cfg.input.synthetic = true;
    cfg.synthetic = Some(SyntheticSection {
        phantom: PhantomConfig { shape: (16, 16, 16), ..PhantomConfig::default() },
        degrade: DegradeConfig::default(),
    });
    let exp = Experiment::new(cfg).unwrap();
    let err = exp.cmd_split().unwrap_err();
    assert!(
        matches!(&err, Error::Stage { stage, .. } if stage == "split"),
        "{err}"
    );
    assert!(err.to_string().contains("make-synthetic"), "{err}");
}

#[test]
fn train_all_axes_writes_checkpoints_histories_and_manifest() {
    let root = tempfile::tempdir().unwrap();
    let cfg = direct_config(root.path(), (8, 8, 8));
    let exp = Experiment::new(cfg).unwrap();
    exp.cmd_split().unwrap();

    let outcomes = exp.cmd_train(&SliceAxis::ALL, false).unwrap();
    assert_eq!(outcomes.len(), 3);
    for (outcome, axis) in outcomes.iter().zip(SliceAxis::ALL) {
        assert_eq!(outcome.stage, format!("train-{}", axis.as_str()));
        let ckpt = outcome.dir.join(checkpoint_name(1));
        let (_, meta, _) = load_checkpoint::<f32>(&ckpt).unwrap();
        assert_eq!(meta.axis, Some(axis));
        assert_eq!(meta.epoch, 1);
        let history = fs::read_to_string(outcome.dir.join("history.csv")).unwrap();
        assert_eq!(history.lines().count(), 1 + 8, "header plus one row per step");
    }

    let manifest = ExperimentManifest::load(exp.root()).unwrap();
    for stage in ["split", "train-xy", "train-xz", "train-yz"] {
        assert!(manifest.stages.contains_key(stage), "missing {stage}");
    }

    // Resuming a finished axis is a no-op that leaves the checkpoint alone.
    let ckpt = outcomes[0].dir.join(checkpoint_name(1));
    let bytes = fs::read(&ckpt).unwrap();
    exp.cmd_train(&[SliceAxis::Xy], true).unwrap();
    assert_eq!(fs::read(&ckpt).unwrap(), bytes);
}

#[test]
fn train_resume_completes_an_interrupted_run() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = direct_config(root.path(), (8, 8, 8));
    cfg.train.all.epochs_const = Some(2);
    let exp = Experiment::new(cfg.clone()).unwrap();
    exp.cmd_split().unwrap();
    let outcome = exp.cmd_train(&[SliceAxis::Xy], false).unwrap().remove(0);

    // Simulate an interruption after epoch 1.
    let final_ckpt = outcome.dir.join(checkpoint_name(2));
    fs::remove_file(&final_ckpt).unwrap();
    assert!(outcome.dir.join(checkpoint_name(1)).is_file());

    exp.cmd_train(&[SliceAxis::Xy], true).unwrap();
    let (_, meta, _) = load_checkpoint::<f32>(&final_ckpt).unwrap();
    assert_eq!(meta.epoch, 2);
    // The appended epoch rows carry the schedule's rate for epoch 2.
    let tcfg = cfg.train_config(SliceAxis::Xy);
    let history = fs::read_to_string(outcome.dir.join("history.csv")).unwrap();
    let last = history.lines().last().unwrap();
    let lr: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
    assert_eq!(lr, crate::spcyclegan::learning_rate(&tcfg, 2));
}

#[test]
fn restore_with_identity_checkpoints_reproduces_the_test_volume() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = direct_config(root.path(), (8, 8, 8));
    let ckpt_dir = root.path().join("ckpts");
    fs::create_dir_all(&ckpt_dir).unwrap();
    cfg.restore.checkpoints.xy = Some(identity_checkpoint(&ckpt_dir, SliceAxis::Xy));
    cfg.restore.checkpoints.xz = Some(identity_checkpoint(&ckpt_dir, SliceAxis::Xz));
    cfg.restore.checkpoints.yz = Some(identity_checkpoint(&ckpt_dir, SliceAxis::Yz));
    cfg.restore.dump_axis_outputs = true;

    let exp = Experiment::new(cfg).unwrap();
    let split = exp.cmd_split().unwrap();
    let outcome = exp.cmd_restore().unwrap();

    let test_bytes = fs::read(&split.outputs["test"]).unwrap();
    assert_eq!(
        fs::read(&outcome.outputs["restored"]).unwrap(),
        test_bytes,
        "identity generators on every axis must reproduce the test volume"
    );
    for axis in SliceAxis::ALL {
        let dumped = &outcome.outputs[&format!("restored_{}", axis.as_str())];
        assert_eq!(fs::read(dumped).unwrap(), test_bytes);
    }
}

#[test]
fn restore_honors_single_axis_weights_and_guards_missing_checkpoints() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = direct_config(root.path(), (8, 8, 8));
    let ckpt_dir = root.path().join("ckpts");
    fs::create_dir_all(&ckpt_dir).unwrap();
    cfg.restore.checkpoints.xy = Some(identity_checkpoint(&ckpt_dir, SliceAxis::Xy));
    cfg.fusion = FusionWeights::new(1.0, 0.0, 0.0).unwrap();

    let exp = Experiment::new(cfg.clone()).unwrap();
    let split = exp.cmd_split().unwrap();
    let outcome = exp.cmd_restore().unwrap();
    assert_eq!(
        fs::read(&outcome.outputs["restored"]).unwrap(),
        fs::read(&split.outputs["test"]).unwrap(),
        "weights (1,0,0) with an identity xy generator give the xy output alone"
    );

    // A positive weight without a checkpoint is an error, not a silent skip.
    cfg.fusion = FusionWeights::default();
    let exp = Experiment::new(cfg).unwrap();
    let err = exp.cmd_restore().unwrap_err();
    assert!(
        matches!(&err, Error::Stage { stage, .. } if stage == "restore"),
        "{err}"
    );
    assert!(err.to_string().contains("zero its fusion weight"), "{err}");
}

#[test]
fn restore_rejects_a_checkpoint_tagged_for_another_axis() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = direct_config(root.path(), (8, 8, 8));
    let ckpt_dir = root.path().join("ckpts");
    fs::create_dir_all(&ckpt_dir).unwrap();
    // An xz-tagged checkpoint offered as the xy source.
    cfg.restore.checkpoints.xy = Some(identity_checkpoint(&ckpt_dir, SliceAxis::Xz));
    cfg.fusion = FusionWeights::new(1.0, 0.0, 0.0).unwrap();
    let exp = Experiment::new(cfg).unwrap();
    exp.cmd_split().unwrap();
    let err = exp.cmd_restore().unwrap_err();
    assert!(matches!(err, Error::AxisMismatch { .. }), "{err}");
}

#[test]
fn evaluate_scores_the_requested_sub_range_and_reruns_identically() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = direct_config(root.path(), (20, 16, 36));
    let ckpt_dir = root.path().join("ckpts");
    fs::create_dir_all(&ckpt_dir).unwrap();
    cfg.restore.checkpoints.xy = Some(identity_checkpoint(&ckpt_dir, SliceAxis::Xy));
    cfg.fusion = FusionWeights::new(1.0, 0.0, 0.0).unwrap();
    // Score only the deepest 16 slices.
    cfg.evaluate.range = RangeSection { z: Some([21, 36]), ..RangeSection::default() };

    let exp = Experiment::new(cfg).unwrap();
    exp.cmd_split().unwrap();
    exp.cmd_restore().unwrap();
    let outcome = exp.cmd_evaluate(&[]).unwrap();

    let report = fs::read_to_string(&outcome.outputs["report_csv"]).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next().unwrap(), "volume,brisque,ifq-surrogate");
    let volumes: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(volumes, ["degraded", "restored"]);

    // The z sub-range leaves 16 xy sections of the original 36; the 20
    // yz sections come from the untouched x extent.
    let detail = fs::read_to_string(&outcome.outputs["detail_csv"]).unwrap();
    let count = |needle: &str| detail.lines().filter(|l| l.contains(needle)).count();
    assert_eq!(count("degraded,brisque,xy,"), 16);
    assert_eq!(count("degraded,brisque,xz,"), 16);
    assert_eq!(count("degraded,brisque,yz,"), 20);

    let bytes = fs::read(&outcome.outputs["report_csv"]).unwrap();
    let outcome2 = exp.cmd_evaluate(&[]).unwrap();
    assert_eq!(fs::read(&outcome2.outputs["report_csv"]).unwrap(), bytes);
}

#[test]
fn evaluate_accepts_explicit_volumes_and_skips_broken_adapters() {
    let root = tempfile::tempdir().unwrap();
    let vol_path = root.path().join("probe.tiff");
    save_tiff(&dyadic_volume((16, 16, 4), 3), &vol_path);
    let garbage = root.path().join("bad.model");
    fs::write(&garbage, "not a model\n").unwrap();

    let mut cfg = base_config(root.path().join("out"));
    cfg.input.synthetic = true;
    cfg.synthetic = Some(SyntheticSection {
        phantom: PhantomConfig { shape: (16, 16, 16), ..PhantomConfig::default() },
        degrade: DegradeConfig::default(),
    });
    cfg.metrics = vec![
        MetricSpec::IfqSurrogate,
        MetricSpec::BrisqueFile { name: "custom".into(), path: garbage.clone() },
    ];
    cfg.evaluate.volumes = vec![VolumeRef { name: "probe".into(), path: vol_path }];

    let exp = Experiment::new(cfg.clone()).unwrap();
    let outcome = exp.cmd_evaluate(&[]).unwrap();
    let text = fs::read_to_string(&outcome.outputs["report_text"]).unwrap();
    assert!(text.contains("probe"));
    assert!(text.contains("skipped metrics:"), "{text}");
    assert!(text.contains("custom"), "{text}");
    let report = fs::read_to_string(&outcome.outputs["report_csv"]).unwrap();
    assert!(report.starts_with("volume,ifq-surrogate"), "{report}");

    // With no usable metric left, evaluation fails loudly.
    cfg.metrics = vec![MetricSpec::BrisqueFile { name: "custom".into(), path: garbage }];
    let exp = Experiment::new(cfg).unwrap();
    let err = exp.cmd_evaluate(&[]).unwrap_err();
    assert!(
        matches!(&err, Error::Stage { stage, .. } if stage == "evaluate"),
        "{err}"
    );
}

#[test]
fn stage_hashes_track_exactly_their_inputs() {
    let root = tempfile::tempdir().unwrap();
    let cfg = direct_config(root.path(), (8, 8, 8));

    let base = Experiment::new(cfg.clone()).unwrap();

    // The split does not depend on the experiment seed…
    let mut reseeded_cfg = cfg.clone();
    reseeded_cfg.seed = 1234;
    let reseeded = Experiment::new(reseeded_cfg).unwrap();
    assert_eq!(
        base.split_key().unwrap().hash,
        reseeded.split_key().unwrap().hash
    );
    // …but training does, through the derived per-axis seeds.
    assert_ne!(
        base.train_key(SliceAxis::Xy).unwrap().hash,
        reseeded.train_key(SliceAxis::Xy).unwrap().hash
    );

    // A different input volume changes the split identity.
    let mut moved_cfg = cfg.clone();
    let other = root.path().join("data/other.tiff");
    save_tiff(&dyadic_volume((8, 8, 8), 44), &other);
    moved_cfg.input.test = Some(other);
    let moved = Experiment::new(moved_cfg).unwrap();
    assert_ne!(base.split_key().unwrap().hash, moved.split_key().unwrap().hash);

    // Fusion weights are part of the restore identity.
    let mut reweighted_cfg = cfg.clone();
    reweighted_cfg.fusion = FusionWeights::new(1.0, 0.0, 0.0).unwrap();
    let reweighted = Experiment::new(reweighted_cfg).unwrap();
    assert_ne!(
        base.restore_key().unwrap().hash,
        reweighted.restore_key().unwrap().hash
    );

    // Train hyperparameters do not disturb the split hash.
    let mut retrained_cfg = cfg.clone();
    retrained_cfg.train.all.lambda2 = Some(0.0);
    let retrained = Experiment::new(retrained_cfg).unwrap();
    assert_eq!(
        base.split_key().unwrap().hash,
        retrained.split_key().unwrap().hash
    );
    assert_ne!(
        base.train_key(SliceAxis::Xy).unwrap().hash,
        retrained.train_key(SliceAxis::Xy).unwrap().hash
    );
}

#[test]
fn report_collates_recorded_stages() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = direct_config(root.path(), (8, 8, 8));
    let ckpt_dir = root.path().join("ckpts");
    fs::create_dir_all(&ckpt_dir).unwrap();
    cfg.restore.checkpoints.xy = Some(identity_checkpoint(&ckpt_dir, SliceAxis::Xy));
    cfg.fusion = FusionWeights::new(1.0, 0.0, 0.0).unwrap();
    cfg.metrics = vec![MetricSpec::IfqSurrogate];

    let exp = Experiment::new(cfg).unwrap();
    assert!(exp.cmd_report().is_err(), "no stages recorded yet");

    exp.cmd_split().unwrap();
    exp.cmd_restore().unwrap();
    exp.cmd_evaluate(&[]).unwrap();
    let path = exp.cmd_report().unwrap();
    let text = fs::read_to_string(&path).unwrap();
    for needle in ["split", "restore", "evaluate", "degraded", "ifq-surrogate"] {
        assert!(text.contains(needle), "report lacks '{needle}':\n{text}");
    }
}
