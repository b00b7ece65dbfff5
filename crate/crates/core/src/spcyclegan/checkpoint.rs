//! Self-describing checkpoint container.
//!
//! Layout: magic, format version (u32 LE), header length (u32 LE), a JSON
//! header (metadata, tensor manifest, optimizer manifest), then raw
//! little-endian parameter data in manifest order followed by Adam moment
//! pairs. Parameters round-trip bit-for-bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::NetConfig;
use super::loss::GanMode;
use super::models::{build_models_with, SpCycleGanModels};
use super::train::{AdamSet, TrainConfig};
use crate::error::{Error, Result};
use crate::nn::{Adam, Net, Scalar};
use crate::section::SliceAxis;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub net: NetConfig,
    pub gan_mode: GanMode,
    pub axis: Option<SliceAxis>,
    pub epoch: usize,
    pub seed: u64,
    pub fingerprint: String,
    pub dtype: String,
}

impl CheckpointMeta {
    pub fn new<S: Scalar>(cfg: &TrainConfig, axis: Option<SliceAxis>, epoch: usize) -> Self {
        CheckpointMeta {
            net: cfg.net,
            gan_mode: cfg.gan_mode,
            axis,
            epoch,
            seed: cfg.seed,
            fingerprint: fingerprint(cfg),
            dtype: dtype_name::<S>().into(),
        }
    }
}

fn fingerprint(cfg: &TrainConfig) -> String {
    let encoded = serde_json::to_vec(cfg).expect("config serializes");
    let digest = Sha256::digest(&encoded);
    let mut hex = String::new();
    for byte in &digest[..8] {
        hex.push_str(&format!("{byte:02x}"));
    }
    format!("{} {} cfg:{hex}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

fn dtype_name<S: Scalar>() -> &'static str {
    match std::mem::size_of::<S>() {
        4 => "f32",
        8 => "f64",
        _ => unreachable!("scalars are f32 or f64"),
    }
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct AdamInfo {
    name: String,
    t: u64,
    beta1: f64,
    beta2: f64,
    lens: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    tensors: Vec<TensorInfo>,
    adam: Option<Vec<AdamInfo>>,
}

const NET_NAMES: [&str; 5] = ["g_ab", "g_ba", "h", "d_a", "d_b"];

fn nets_of<S>(m: &SpCycleGanModels<S>) -> [(&'static str, &Net<S>); 5] {
    [
        ("g_ab", &m.g_ab),
        ("g_ba", &m.g_ba),
        ("h", &m.h),
        ("d_a", &m.d_a),
        ("d_b", &m.d_b),
    ]
}

fn write_scalars<S: Scalar>(buf: &mut Vec<u8>, vals: &[S]) {
    if std::mem::size_of::<S>() == 4 {
        for v in vals {
            buf.extend_from_slice(&(v.to_f64c() as f32).to_le_bytes());
        }
    } else {
        for v in vals {
            buf.extend_from_slice(&v.to_f64c().to_le_bytes());
        }
    }
}

struct ScalarReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ScalarReader<'a> {
    fn take<S: Scalar>(&mut self, n: usize) -> Option<Vec<S>> {
        let width = std::mem::size_of::<S>();
        let end = self.pos.checked_add(n.checked_mul(width)?)?;
        if end > self.bytes.len() {
            return None;
        }
        let mut out = Vec::with_capacity(n);
        for chunk in self.bytes[self.pos..end].chunks_exact(width) {
            let v = if width == 4 {
                f32::from_le_bytes(chunk.try_into().unwrap()) as f64
            } else {
                f64::from_le_bytes(chunk.try_into().unwrap())
            };
            out.push(S::from_f64c(v));
        }
        self.pos = end;
        Some(out)
    }

    fn exhausted(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Writes all five networks, metadata, and (optionally) optimizer state.
pub fn save_checkpoint<S: Scalar>(
    models: &SpCycleGanModels<S>,
    meta: &CheckpointMeta,
    opts: Option<&AdamSet<S>>,
    path: &Path,
) -> Result<()> {
    if meta.dtype != dtype_name::<S>() {
        return Err(Error::Checkpoint {
            path: path.to_owned(),
            message: format!("meta declares dtype {} but saving {}", meta.dtype, dtype_name::<S>()),
        });
    }
    let mut tensors = Vec::new();
    let mut data = Vec::new();
    for (net_name, net) in nets_of(models) {
        net.for_each_param(&mut |param_name, vals| {
            tensors.push(TensorInfo {
                name: format!("{net_name}.{param_name}"),
                len: vals.len() as u64,
            });
            write_scalars(&mut data, vals);
        });
    }
    let adam = opts.map(|set| {
        let mut infos = Vec::new();
        for (name, opt) in [
            ("g_ab", &set.g_ab),
            ("g_ba", &set.g_ba),
            ("h", &set.h),
            ("d_a", &set.d_a),
            ("d_b", &set.d_b),
        ] {
            let (t, state) = opt.export();
            let mut lens = Vec::with_capacity(state.len());
            for (m, v) in &state {
                debug_assert_eq!(m.len(), v.len());
                lens.push(m.len() as u64);
                write_scalars(&mut data, m);
                write_scalars(&mut data, v);
            }
            infos.push(AdamInfo {
                name: name.into(),
                t,
                beta1: opt.beta1,
                beta2: opt.beta2,
                lens,
            });
        }
        infos
    });

    let header = serde_json::to_vec(&Header { meta: meta.clone(), tensors, adam })
        .expect("header serializes");
    let mut out = Vec::with_capacity(12 + header.len() + data.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&data);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn corrupt(path: &Path, message: impl Into<String>) -> Error {
    Error::Checkpoint { path: path.to_owned(), message: message.into() }
}

/// Reads a checkpoint back into freshly built networks of the embedded
/// architecture.
pub fn load_checkpoint<S: Scalar>(
    path: &Path,
) -> Result<(SpCycleGanModels<S>, CheckpointMeta, Option<AdamSet<S>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt(path, "not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(corrupt(
            path,
            format!("unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"),
        ));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| corrupt(path, "truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| corrupt(path, format!("malformed header: {e}")))?;
    if header.meta.dtype != dtype_name::<S>() {
        return Err(corrupt(
            path,
            format!("stores {} parameters, asked to load {}", header.meta.dtype, dtype_name::<S>()),
        ));
    }

    let mut models = build_models_with::<S>(&header.meta.net, header.meta.gan_mode, header.meta.seed);
    let mut reader = ScalarReader { bytes: &bytes[header_end..], pos: 0 };
    let mut manifest = header.tensors.iter();
    let mut fill_error = None;
    for (net_name, net) in [
        ("g_ab", &mut models.g_ab),
        ("g_ba", &mut models.g_ba),
        ("h", &mut models.h),
        ("d_a", &mut models.d_a),
        ("d_b", &mut models.d_b),
    ] {
        net.visit_params(&mut |param_name, vals, _| {
            if fill_error.is_some() {
                return;
            }
            let expected = format!("{net_name}.{param_name}");
            let info = match manifest.next() {
                Some(info) => info,
                None => {
                    fill_error = Some(format!("tensor manifest ends before {expected}"));
                    return;
                }
            };
            if info.name != expected || info.len != vals.len() as u64 {
                fill_error = Some(format!(
                    "tensor {} (len {}) does not match architecture slot {expected} (len {})",
                    info.name,
                    info.len,
                    vals.len()
                ));
                return;
            }
            match reader.take::<S>(vals.len()) {
                Some(read) => vals.copy_from_slice(&read),
                None => fill_error = Some(format!("data truncated at {expected}")),
            }
        });
    }
    if let Some(msg) = fill_error {
        return Err(corrupt(path, msg));
    }
    if manifest.next().is_some() {
        return Err(corrupt(path, "tensor manifest lists more tensors than the architecture has"));
    }

    let opts = match header.adam {
        None => None,
        Some(infos) => {
            if infos.len() != NET_NAMES.len()
                || infos.iter().zip(NET_NAMES).any(|(i, n)| i.name != n)
            {
                return Err(corrupt(path, "optimizer manifest does not list the five networks"));
            }
            let mut restored = Vec::with_capacity(infos.len());
            for info in &infos {
                let mut state = Vec::with_capacity(info.lens.len());
                for &len in &info.lens {
                    let m = reader
                        .take::<S>(len as usize)
                        .ok_or_else(|| corrupt(path, "data truncated in optimizer state"))?;
                    let v = reader
                        .take::<S>(len as usize)
                        .ok_or_else(|| corrupt(path, "data truncated in optimizer state"))?;
                    state.push((m, v));
                }
                let mut opt = Adam::new(info.beta1, info.beta2);
                opt.import(info.t, state);
                restored.push(opt);
            }
            let mut it = restored.into_iter();
            Some(AdamSet {
                g_ab: it.next().unwrap(),
                g_ba: it.next().unwrap(),
                h: it.next().unwrap(),
                d_a: it.next().unwrap(),
                d_b: it.next().unwrap(),
            })
        }
    };
    if !reader.exhausted() {
        return Err(corrupt(path, "trailing bytes after declared data"));
    }
    Ok((models, header.meta, opts))
}

/// Loads a checkpoint and insists it was trained with the expected
/// architecture.
pub fn load_matching<S: Scalar>(
    path: &Path,
    expected: &NetConfig,
) -> Result<(SpCycleGanModels<S>, CheckpointMeta, Option<AdamSet<S>>)> {
    let (models, meta, opts) = load_checkpoint::<S>(path)?;
    if meta.net != *expected {
        return Err(Error::Checkpoint {
            path: path.to_owned(),
            message: format!(
                "architecture mismatch: checkpoint has {:?}, expected {:?}",
                meta.net, expected
            ),
        });
    }
    Ok((models, meta, opts))
}
