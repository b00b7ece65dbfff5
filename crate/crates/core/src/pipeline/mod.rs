//! End-to-end experiment orchestration: one TOML config drives dataset
//! splitting, per-axis training, restoration with fusion, and evaluation.
//!
//! Every stage writes into `out_dir/<stage>-<hash>/` where the hash covers
//! the stage's resolved inputs (including upstream stage hashes), so two
//! runs of the same config land in the same directories byte-for-byte and
//! a config change can never silently reuse stale artifacts. Each stage
//! directory carries a `manifest.json`; the experiment root accumulates
//! `experiment.json` with enough detail to re-run any stage identically.
//! Timings and peak memory are recorded per stage and are the only
//! nondeterministic fields.

pub mod config;
pub mod manifest;
pub mod stages;

#[cfg(test)]
mod tests;

pub use config::{
    format_for_path, CheckpointOverrides, CliOverrides, EvaluateSection, ExperimentConfig,
    FormatName, InputMode, InputSection, MetricSpec, OutputSection, RangeSection,
    RestoreSection, SyntheticSection, TrainOverride, TrainSection, VolumeRef,
};
pub use manifest::{
    code_version, short_hash, ExperimentManifest, StageKey, StageManifest, StageSummary,
    EXPERIMENT_MANIFEST,
};
pub use stages::{Experiment, StageOutcome};
