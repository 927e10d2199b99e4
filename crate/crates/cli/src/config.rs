//! Experiment configuration: one JSON document holding the master seed, the
//! data, model and training sections and the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fedstock_core::data::io::ArtifactStamp;
use fedstock_core::data::DataConfig;
use fedstock_core::fl::{FederationConfig, Regime};
use fedstock_core::model::ModelConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; replaces `training.*.seed` at run time.
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub training: TrainingSection,
    /// Root of `data/`, `models/`, `reports/` and `compare/`. Not hashed.
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    /// Settings for every regime without an entry in `regimes`.
    pub defaults: FederationConfig,
    /// Full per-regime replacements of `defaults`.
    pub regimes: BTreeMap<Regime, FederationConfig>,
    /// Share of each farm's training animals held out for the per-round
    /// validation loss; 0 disables validation.
    pub validation_fraction: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            defaults: FederationConfig::default(),
            regimes: BTreeMap::new(),
            validation_fraction: 0.0,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            training: TrainingSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            CliError::config(field, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        let cfg = Self::from_json(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.model.validate()?;
        if self.model.horizon != self.data.horizon {
            return Err(CliError::config(
                "model.horizon",
                format!("must equal data.horizon ({})", self.data.horizon),
            ));
        }
        self.training.defaults.validate()?;
        for (regime, cfg) in &self.training.regimes {
            cfg.validate().map_err(|e| match e {
                fedstock_core::Error::Config { field, reason } => CliError::config(
                    field.replacen("training.", &format!("training.regimes.{regime}."), 1),
                    reason,
                ),
                other => other.into(),
            })?;
        }
        let v = self.training.validation_fraction;
        if !(0.0..1.0).contains(&v) {
            return Err(CliError::config("training.validation_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Training settings of `regime` with the master seed applied.
    pub fn federation(&self, regime: Regime) -> FederationConfig {
        let base = self.training.regimes.get(&regime).unwrap_or(&self.training.defaults);
        FederationConfig {
            seed: self.seed,
            policy: regime.policy(),
            ..base.clone()
        }
    }

    /// SHA-256 of the canonical JSON of everything except `output_dir`.
    pub fn config_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        sha256_hex(v.to_string().as_bytes())
    }

    /// SHA-256 of the seed and data section: what determines the dataset.
    pub fn data_hash(&self) -> String {
        let v = serde_json::json!({ "seed": self.seed, "data": self.data });
        sha256_hex(v.to_string().as_bytes())
    }

    pub fn stamp(&self) -> ArtifactStamp {
        ArtifactStamp {
            config_hash: self.config_hash(),
            seed: self.seed,
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
