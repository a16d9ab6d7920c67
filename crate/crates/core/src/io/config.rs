use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simbench::SimConfig;
use crate::training::TrainConfig;
use crate::transfer::TransferSettings;

/// Environment variable that overrides every seed in a [`RunConfig`].
pub const SEED_ENV: &str = "GDP_SEED";

/// JSON run configuration. Missing sections and keys take their defaults;
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub train: TrainConfig,
    pub transfer: TransferSettings,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.sim.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.transfer.validate().map_err(wrap)
    }

    /// Sets both seeds to `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sim.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Applies the seed override from the environment, if set.
    pub fn apply_env_seed(self) -> Result<Self> {
        match std::env::var(SEED_ENV) {
            Ok(v) => {
                let seed = v
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("{SEED_ENV} must be an unsigned integer, got `{v}`")))?;
                Ok(self.with_seed(seed))
            }
            Err(_) => Ok(self),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.batch_size, 512);
        assert_eq!(cfg.train.learning_rate, 1e-4);
        assert_eq!(cfg.sim.n, 10_000);
    }

    #[test]
    fn unknown_key_named() {
        let err = RunConfig::from_json(r#"{"train": {"batch_sise": 3}}"#).unwrap_err().to_string();
        assert!(err.contains("batch_sise"), "{err}");
        let err = RunConfig::from_json(r#"{"simulation": {}}"#).unwrap_err().to_string();
        assert!(err.contains("simulation"), "{err}");
    }

    #[test]
    fn violations_rejected() {
        assert!(RunConfig::from_json(r#"{"sim": {"rho": 1.5}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"train": {"batch_size": 0}}"#).is_err());
    }

    #[test]
    fn json_round_trip_and_seed_override() {
        let cfg = RunConfig::default().with_seed(17);
        assert_eq!(RunConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
        assert_eq!((cfg.sim.seed, cfg.train.seed), (17, 17));
    }
}
