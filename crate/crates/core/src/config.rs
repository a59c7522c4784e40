//! Run configuration, read from TOML. Every section and field is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::heuristic::{BoundaryConvention, Thresholds};
use crate::discovery::EvolutionConfig;
use crate::error::{Error, Result};
use crate::eval::SignatureRules;
use crate::nn::train::TrainConfig;
use crate::pipeline::RolloutSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub enabled: bool,
    pub thresholds: Thresholds,
    pub convention: BoundaryConvention,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            enabled: true,
            thresholds: Thresholds::default(),
            convention: BoundaryConvention::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HilConfig {
    pub bind: String,
    /// Bearer token; unset leaves the API open (bind to localhost then).
    pub token: Option<String>,
    pub labels: PathBuf,
}

impl Default for HilConfig {
    fn default() -> Self {
        HilConfig {
            bind: "127.0.0.1:8080".into(),
            token: None,
            labels: PathBuf::from("labels.jsonl"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub rollout: RolloutSettings,
    pub filter: FilterConfig,
    pub train: TrainConfig,
    pub evolution: EvolutionConfig,
    pub hil: HilConfig,
    /// Signature rules file; the built-in rules when unset.
    pub signatures: Option<PathBuf>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::format("config", e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn signature_rules(&self) -> Result<SignatureRules> {
        match &self.signatures {
            None => Ok(SignatureRules::default()),
            Some(p) => SignatureRules::parse(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        }
    }
}
