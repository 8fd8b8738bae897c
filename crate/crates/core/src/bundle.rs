//! A trained avatar on disk: `bundle.json` pointing at the mesh asset, the UV
//! binding cache, the checkpoint and the training config.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::avatar::Avatar;
use crate::error::{Error, Result};
use crate::geometry::{load_mesh_asset, save_mesh_asset};
use crate::train::{load_checkpoint, save_checkpoint, Checkpoint, TrainConfig, Trainer};
use crate::uv::SurfaceBinding;

pub const BUNDLE_FILE: &str = "bundle.json";
const BUNDLE_FORMAT: &str = "meshsplat-bundle";

/// Paths are relative to the directory holding `bundle.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub format: String,
    pub mesh: PathBuf,
    pub binding: PathBuf,
    pub checkpoint: PathBuf,
    pub config: PathBuf,
    pub config_hash: String,
}

#[derive(Clone, Debug)]
pub struct AvatarBundle {
    pub root: PathBuf,
    pub manifest: BundleManifest,
    pub config: TrainConfig,
    pub avatar: Avatar,
    pub checkpoint: Checkpoint,
}

fn manifest_location(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(BUNDLE_FILE)
    } else {
        path.to_path_buf()
    }
}

impl AvatarBundle {
    /// Writes the trainer's current state as a bundle in `dir`.
    pub fn write(dir: impl AsRef<Path>, trainer: &Trainer) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = BundleManifest {
            format: BUNDLE_FORMAT.into(),
            mesh: "mesh.json".into(),
            binding: "binding.bin".into(),
            checkpoint: "checkpoint.bin".into(),
            config: "config.json".into(),
            config_hash: trainer.config.hash(),
        };
        save_mesh_asset(&trainer.avatar.mesh, dir.join(&manifest.mesh))?;
        trainer.avatar.binding.save(dir.join(&manifest.binding))?;
        save_checkpoint(&trainer.checkpoint(), dir.join(&manifest.checkpoint))?;
        trainer.config.save(dir.join(&manifest.config))?;
        let path = dir.join(BUNDLE_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Loads `path` (a `bundle.json` or the directory containing one).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = manifest_location(path.as_ref());
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: BundleManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(Error::InvalidArgument(format!(
                "{}: not an avatar bundle (format {:?})",
                path.display(),
                manifest.format
            )));
        }
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let config = TrainConfig::load(root.join(&manifest.config))?;
        let hash = config.hash();
        if hash != manifest.config_hash {
            return Err(Error::ConfigHashMismatch {
                expected: manifest.config_hash.clone(),
                actual: hash,
            });
        }
        let checkpoint = load_checkpoint(root.join(&manifest.checkpoint))?;
        if checkpoint.manifest.config_hash != hash {
            return Err(Error::ConfigHashMismatch {
                expected: hash,
                actual: checkpoint.manifest.config_hash.clone(),
            });
        }
        let mesh = load_mesh_asset(root.join(&manifest.mesh))?;
        let binding = SurfaceBinding::load(root.join(&manifest.binding), &mesh)?;
        if binding.len() != checkpoint.manifest.gaussians {
            return Err(Error::DimensionMismatch {
                what: "bundle binding samples vs checkpoint gaussians",
                expected: checkpoint.manifest.gaussians,
                actual: binding.len(),
            });
        }
        let mut avatar = Avatar::with_binding(mesh, binding, &config)?;
        checkpoint.apply(&mut avatar)?;
        avatar.validate()?;
        Ok(Self {
            root,
            manifest,
            config,
            avatar,
            checkpoint,
        })
    }

    /// A trainer that resumes from the bundled checkpoint.
    pub fn into_trainer(self) -> Result<Trainer> {
        let mut trainer = Trainer::from_avatar(self.config, self.avatar)?;
        trainer.restore(&self.checkpoint)?;
        Ok(trainer)
    }
}
