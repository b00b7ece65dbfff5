//! End-to-end checks of the binary: subcommand flow, stdout, exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tridecon(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tridecon"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

/// Small synthetic experiment: 16^3 phantom, one-epoch toy nets.
fn write_config(dir: &Path) {
    fs::write(
        dir.join("exp.toml"),
        r#"
seed = 7
out_dir = "out"

[input]
synthetic = true

[synthetic.phantom]
shape = [16, 16, 16]
ellipsoids = 2
tubes = 1
background = 0.04
seed = 0

[synthetic.degrade]
sigma_top = 0.4
sigma_bottom = 1.2
decay_tau = 96.0
photons = 400
seed = 0

[train]
epochs_const = 1
epochs_decay = 0
patch = [8, 8]
pool_size = 2
checkpoint_every = 1

[train.net]
base_features = 2
n_res_blocks = 1
disc_layers = 0
res_pad = "zero"
kind = "resnet"
"#,
    )
    .unwrap();
}

#[test]
fn synthetic_flow_runs_all_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir);

    for cmd in ["make-synthetic", "split"] {
        let out = tridecon(dir, &[cmd, "--config", "exp.toml"]);
        assert_eq!(code(&out), 0, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(stdout(&out).contains(&format!("{cmd}:")));
    }

    let out = tridecon(dir, &["train", "--config", "exp.toml", "--axis", "xy"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("train-xy:"));
    assert!(!stdout(&out).contains("train-xz:"));

    let out = tridecon(dir, &["train", "--config", "exp.toml"]);
    assert_eq!(code(&out), 0);
    for axis in ["xy", "xz", "yz"] {
        assert!(stdout(&out).contains(&format!("train-{axis}:")));
    }

    let out = tridecon(dir, &["restore", "--config", "exp.toml"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let out = tridecon(dir, &["evaluate", "--config", "exp.toml"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("degraded") && text.contains("restored"));
    assert!(text.contains("brisque") && text.contains("ifq-surrogate"));

    let out = tridecon(dir, &["report", "--config", "exp.toml"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    for stage in ["make-synthetic", "split", "train-xy", "restore", "evaluate"] {
        assert!(text.contains(stage), "report lists {stage}");
    }
}

#[test]
fn single_axis_restore_uses_that_axis_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir);
    for cmd in ["make-synthetic", "split"] {
        assert_eq!(code(&tridecon(dir, &[cmd, "--config", "exp.toml"])), 0);
    }
    assert_eq!(code(&tridecon(dir, &["train", "--config", "exp.toml", "--axis", "xz"])), 0);

    // Fused restore must refuse (missing xy/yz checkpoints)…
    let out = tridecon(dir, &["restore", "--config", "exp.toml"]);
    assert_eq!(code(&out), 3);

    // …while the xz-only restore succeeds with just the one checkpoint.
    let out = tridecon(dir, &["restore", "--config", "exp.toml", "--axis", "xz"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exit_codes_separate_validation_from_runtime_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_config(dir);

    // Config that fails validation (empty out_dir).
    fs::write(dir.join("bad.toml"), "seed = 1\nout_dir = \"\"\n[input]\nsynthetic = true\n")
        .unwrap();
    assert_eq!(code(&tridecon(dir, &["split", "--config", "bad.toml"])), 2);

    // Unreadable config.
    assert_eq!(code(&tridecon(dir, &["split", "--config", "missing.toml"])), 2);

    // --axis has no meaning for split.
    assert_eq!(code(&tridecon(dir, &["split", "--config", "exp.toml", "--axis", "xy"])), 2);

    // Malformed evaluate volume argument.
    assert_eq!(code(&tridecon(dir, &["evaluate", "--config", "exp.toml", "nopath"])), 2);

    // Valid config, but the pipeline has nothing to restore: runtime failure.
    assert_eq!(code(&tridecon(dir, &["make-synthetic", "--config", "exp.toml"])), 0);
    assert_eq!(code(&tridecon(dir, &["split", "--config", "exp.toml"])), 0);
    assert_eq!(code(&tridecon(dir, &["restore", "--config", "exp.toml"])), 3);
}
