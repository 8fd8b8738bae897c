//! Versioned binary checkpoint plus a JSON manifest next to it.
//!
//! Binary layout (little endian): magic, `u32` version, `u32` manifest length,
//! manifest JSON, then for every tensor its values, first moments and second
//! moments in the build's scalar type.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AdamMoments, TrainConfig, TrainState};
use crate::avatar::Avatar;
use crate::error::{Error, Result};
use crate::math::Real;
use crate::offsets::{NetworkConfig, OffsetMode, OffsetModel};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MSCKPT\0\0";
const VERSION: u32 = 1;
const SCALAR: usize = std::mem::size_of::<Real>();

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub dtype: String,
    pub step: u64,
    pub epoch: u64,
    pub epoch_position: usize,
    pub seed: u64,
    pub gaussians: usize,
    pub sh_degree: u32,
    pub offset_mode: OffsetMode,
    pub network: Option<NetworkConfig>,
    pub psi_dim: usize,
    pub config_hash: String,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub state: TrainState,
    pub tensors: Vec<Vec<Real>>,
}

fn dtype() -> &'static str {
    if SCALAR == 8 {
        "f64"
    } else {
        "f32"
    }
}

impl Checkpoint {
    pub fn capture(config: &TrainConfig, avatar: &Avatar, state: &TrainState) -> Self {
        let names = avatar.parameter_names();
        let tensors: Vec<Vec<Real>> = avatar.parameters().iter().map(|p| p.to_vec()).collect();
        let network = match &avatar.offsets {
            OffsetModel::Dynamic { net, .. } => Some(net.config.clone()),
            OffsetModel::Static { .. } => None,
        };
        let manifest = CheckpointManifest {
            format: "meshsplat-checkpoint".into(),
            version: VERSION,
            dtype: dtype().into(),
            step: state.step,
            epoch: state.epoch,
            epoch_position: state.epoch_position,
            seed: state.seed,
            gaussians: avatar.len(),
            sh_degree: avatar.field.sh_degree,
            offset_mode: avatar.offsets.mode(),
            network,
            psi_dim: avatar.psi_dim(),
            config_hash: config.hash(),
            tensors: names
                .into_iter()
                .zip(&tensors)
                .map(|(name, t)| TensorInfo { name, len: t.len() })
                .collect(),
        };
        Self {
            manifest,
            state: state.clone(),
            tensors,
        }
    }

    /// Copies the stored tensors into a structurally identical avatar.
    pub fn apply(&self, avatar: &mut Avatar) -> Result<()> {
        let m = &self.manifest;
        if m.gaussians != avatar.len() {
            return Err(Error::DimensionMismatch {
                what: "checkpoint gaussian count",
                expected: avatar.len(),
                actual: m.gaussians,
            });
        }
        if m.offset_mode != avatar.offsets.mode() || m.sh_degree != avatar.field.sh_degree {
            return Err(Error::InvalidArgument(format!(
                "checkpoint has {:?} offsets and SH degree {}, avatar has {:?} and {}",
                m.offset_mode,
                m.sh_degree,
                avatar.offsets.mode(),
                avatar.field.sh_degree
            )));
        }
        let names = avatar.parameter_names();
        let mut params = avatar.parameters_mut();
        if params.len() != self.tensors.len() {
            return Err(Error::DimensionMismatch {
                what: "checkpoint tensor count",
                expected: params.len(),
                actual: self.tensors.len(),
            });
        }
        for ((dst, src), name) in params.iter_mut().zip(&self.tensors).zip(&names) {
            if dst.len() != src.len() {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint tensor {name} has {} values, avatar expects {}",
                    src.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        let total: usize = self.tensors.iter().map(|t| 3 * t.len() * SCALAR).sum();
        let mut out = Vec::with_capacity(16 + manifest.len() + total);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        for (t, m) in self.tensors.iter().zip(&self.state.moments) {
            for arr in [t, &m.m, &m.v] {
                for v in arr {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let fmt = |offset: usize, message: String| Error::Format {
            path: path.to_path_buf(),
            offset: offset as u64,
            message,
        };
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(fmt(0, "not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(fmt(8, format!("unsupported checkpoint version {version}")));
        }
        let mlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = 16 + mlen;
        if bytes.len() < body {
            return Err(fmt(bytes.len(), "truncated manifest".into()));
        }
        let manifest: CheckpointManifest = serde_json::from_slice(&bytes[16..body])
            .map_err(|e| fmt(16, format!("bad manifest: {e}")))?;
        if manifest.dtype != dtype() {
            return Err(fmt(16, format!("checkpoint dtype {} does not match build {}", manifest.dtype, dtype())));
        }
        let expected: usize = manifest.tensors.iter().map(|t| 3 * t.len * SCALAR).sum();
        if bytes.len() != body + expected {
            return Err(fmt(
                bytes.len(),
                format!("payload is {} bytes, manifest implies {expected}", bytes.len() - body),
            ));
        }
        let mut at = body;
        let mut read = |n: usize| -> Vec<Real> {
            let v = bytes[at..at + n * SCALAR]
                .chunks_exact(SCALAR)
                .map(|c| Real::from_le_bytes(c.try_into().unwrap()))
                .collect();
            at += n * SCALAR;
            v
        };
        let mut tensors = Vec::new();
        let mut moments = Vec::new();
        for info in &manifest.tensors {
            tensors.push(read(info.len));
            let m = read(info.len);
            let v = read(info.len);
            moments.push(AdamMoments { m, v });
        }
        let state = TrainState {
            step: manifest.step,
            epoch: manifest.epoch,
            epoch_position: manifest.epoch_position,
            seed: manifest.seed,
            moments,
        };
        Ok(Self {
            manifest,
            state,
            tensors,
        })
    }
}

fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` and its manifest (`path` with a `.json` extension).
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))?;
    let mp = manifest_path(path);
    let text = serde_json::to_string_pretty(&ckpt.manifest).expect("manifest serializes");
    fs::write(&mp, text).map_err(|e| Error::io(&mp, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes, path)
}
