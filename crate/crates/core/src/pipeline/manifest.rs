//! Stage bookkeeping: content-addressed directories, per-stage manifests,
//! and the experiment-level manifest that accumulates across commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// 8 hex chars of the SHA-256 of the value's canonical JSON. JSON object
/// keys serialize in sorted order, so equal configurations hash equally.
pub fn short_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("hash input serializes");
    let digest = Sha256::digest(&bytes);
    digest[..4].iter().map(|b| format!("{b:02x}")).collect()
}

pub fn code_version() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

/// Peak resident set of this process in kB, from the kernel's accounting.
pub fn peak_rss_kb() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Resets the peak-RSS watermark so the next reading is per-stage. Best
/// effort: unsupported kernels leave the watermark cumulative.
pub fn reset_peak_rss() {
    let _ = fs::write("/proc/self/clear_refs", "5");
}

/// A content-addressed stage directory under the experiment root.
#[derive(Debug, Clone)]
pub struct StageKey {
    pub name: String,
    pub hash: String,
}

impl StageKey {
    pub fn new<T: Serialize>(name: &str, hash_input: &T) -> Self {
        StageKey { name: name.to_string(), hash: short_hash(hash_input) }
    }

    pub fn dir_name(&self) -> String {
        format!("{}-{}", self.name, self.hash)
    }

    pub fn dir(&self, root: &Path) -> PathBuf {
        root.join(self.dir_name())
    }
}

/// Written into each stage directory as `manifest.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub hash: String,
    pub code_version: String,
    /// Upstream identities: stage hashes or source paths.
    pub inputs: BTreeMap<String, String>,
    /// Artifact name -> file name inside the stage directory.
    pub outputs: BTreeMap<String, String>,
    pub wall_ms: u128,
    pub peak_rss_kb: Option<u64>,
    /// The resolved stage-relevant configuration.
    pub config: serde_json::Value,
}

/// `experiment.json` at the experiment root: enough to locate every
/// stage's artifacts and re-run any stage identically.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub code_version: String,
    pub config: serde_json::Value,
    pub stages: BTreeMap<String, StageSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageSummary {
    /// Directory name under the experiment root.
    pub dir: String,
    pub hash: String,
    pub wall_ms: u128,
    pub peak_rss_kb: Option<u64>,
    /// Artifact name -> path relative to the experiment root.
    pub outputs: BTreeMap<String, String>,
}

pub const EXPERIMENT_MANIFEST: &str = "experiment.json";

impl ExperimentManifest {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(EXPERIMENT_MANIFEST);
        if !path.exists() {
            return Ok(ExperimentManifest::default());
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(EXPERIMENT_MANIFEST);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// Wall-clock and memory accounting for one stage execution.
pub struct StageClock {
    started: Instant,
}

impl StageClock {
    pub fn start() -> Self {
        reset_peak_rss();
        StageClock { started: Instant::now() }
    }

    pub fn wall_ms(&self) -> u128 {
        self.started.elapsed().as_millis()
    }
}
