use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use shopper::model::ModelConfig;
use shopper::toy::ToyWorldConfig;
use shopper::variational::OptimizerConfig;

use crate::error::CliError;

/// Default locations, overridden by command-line flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub data_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a run reads from its TOML file.
///
/// ```toml
/// [model]
/// k_items = 8
/// think_ahead = true
///
/// [optimizer]
/// max_iterations = 50000
/// rng_seed = 1
///
/// [simulate]
/// n_customers_per_segment = 50
///
/// [paths]
/// data_dir = "data"
/// checkpoint = "model.ckpt"
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub simulate: ToyWorldConfig,
    pub paths: PathsConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    /// A `--seed` flag replaces the seed of every subsystem.
    pub fn apply_seed(&mut self, seed: Option<u64>) {
        if let Some(seed) = seed {
            self.optimizer.rng_seed = seed;
            self.simulate.rng_seed = seed;
        }
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_sections_fill_defaults() {
        let cfg: RunConfig = toml::from_str("[model]\nk_items = 3\n[optimizer]\nrng_seed = 4\n").unwrap();
        assert_eq!(cfg.model.k_items, 3);
        assert_eq!(cfg.model.k_price, ModelConfig::default().k_price);
        assert_eq!(cfg.optimizer.rng_seed, 4);
        assert_eq!(cfg.simulate, ToyWorldConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[model]\nk_itemz = 3\n").is_err());
        assert!(toml::from_str::<RunConfig>("[extra]\nx = 1\n").is_err());
        assert!(toml::from_str::<RunConfig>("seed = 1\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.apply_seed(Some(9));
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
