use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::adam::AdamConfig;
use super::loss::LossConfig;
use crate::error::{Error, Result};
use crate::math::Real;
use crate::offsets::{NetworkConfig, OffsetMode};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub rotation: Real,
    pub scale: Real,
    pub opacity: Real,
    pub sh_dc: Real,
    pub sh_rest: Real,
    pub network: Real,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            rotation: 1e-3,
            scale: 5e-3,
            opacity: 5e-2,
            sh_dc: 2.5e-3,
            sh_rest: 1.25e-4,
            network: 1e-4,
        }
    }
}

/// Every hyperparameter of an avatar and its training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub deterministic: bool,
    pub uv_resolution: u32,
    /// Sampling density factor for mouth-interior faces.
    pub mouth_multiplier: u32,
    pub sh_degree: u32,
    pub offset_mode: OffsetMode,
    pub network: NetworkConfig,
    pub loss: LossConfig,
    pub learning_rates: LearningRates,
    pub adam: AdamConfig,
    pub frames_per_epoch: usize,
    pub epochs: u64,
    pub background: [Real; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            deterministic: true,
            uv_resolution: 128,
            mouth_multiplier: 2,
            sh_degree: 3,
            offset_mode: OffsetMode::Dynamic,
            network: NetworkConfig::default(),
            loss: LossConfig::default(),
            learning_rates: LearningRates::default(),
            adam: AdamConfig::default(),
            frames_per_epoch: 2000,
            epochs: 30,
            background: [1.0; 3],
        }
    }
}

impl TrainConfig {
    /// Reads `.toml` files as TOML and anything else as JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: e
                    .span()
                    .map(|s| text[..s.start].lines().count().max(1))
                    .unwrap_or(0),
                message: e.message().to_string(),
            })?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.uv_resolution < 2 {
            return Err(Error::InvalidArgument(format!(
                "uv_resolution must be >= 2, got {}",
                self.uv_resolution
            )));
        }
        if self.mouth_multiplier == 0 {
            return Err(Error::InvalidArgument("mouth_multiplier must be >= 1".into()));
        }
        if self.sh_degree > crate::gaussians::MAX_SH_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "sh_degree must be <= {}, got {}",
                crate::gaussians::MAX_SH_DEGREE,
                self.sh_degree
            )));
        }
        if self.frames_per_epoch == 0 {
            return Err(Error::InvalidArgument("frames_per_epoch must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        let mut out = String::with_capacity(64);
        for b in digest {
            write!(out, "{b:02x}").unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_and_toml_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            seed: 17,
            network: NetworkConfig { width: 32, ..Default::default() },
            ..Default::default()
        };
        let p = dir.path().join("c.json");
        cfg.save(&p).unwrap();
        assert_eq!(TrainConfig::load(&p).unwrap(), cfg);

        let t = dir.path().join("c.toml");
        fs::write(&t, "seed = 17\n[network]\nwidth = 32\n").unwrap();
        assert_eq!(TrainConfig::load(&t).unwrap(), cfg);
    }

    #[test]
    fn hash_tracks_content() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.loss.mouth_weight = 10.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, "{\n  \"sed\": 1\n}").unwrap();
        assert!(matches!(TrainConfig::load(&p), Err(Error::Parse { line: 2, .. })));
        fs::write(&p, "{\"loss\": {\"huber_delta\": 0.0}}").unwrap();
        assert!(matches!(TrainConfig::load(&p), Err(Error::InvalidArgument(_))));
    }
}
