use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{DecodingParams, RetryPolicy};
use crate::digest::short_digest;
use crate::tools::NumFrames;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Model identifier per role. Unset roles fall back to the environment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelNames {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controller: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub understanding: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transcription: Option<String>,
}

/// Loop and backend settings. Every field has a default, so an empty TOML
/// file is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Maximum controller iterations before the forced answer.
    pub step_budget: u32,
    /// Frames sampled per clip analysis.
    pub n2: u32,
    /// Frames in the whole-video snapshot taken at start.
    pub initial_sample: u32,
    /// Advisory; steps above it are logged, not cut off.
    pub per_step_token_budget: u64,
    pub models: ModelNames,
    pub decoding: DecodingParams,
    pub retry: RetryPolicy,
    /// Concurrent runs in `run_many` and evaluation.
    pub parallelism: usize,
    /// Check recorded request digests when replaying scripts.
    pub strict: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            step_budget: 10,
            n2: 10,
            initial_sample: 30,
            per_step_token_budget: 8000,
            models: ModelNames::default(),
            decoding: DecodingParams::default(),
            retry: RetryPolicy::default(),
            parallelism: 4,
            strict: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.step_budget == 0 {
            return Err(ConfigError::Invalid("step_budget must be at least 1".into()));
        }
        if self.n2 == 0 {
            return Err(ConfigError::Invalid("n2 must be at least 1".into()));
        }
        if NumFrames::try_from(self.initial_sample as u64).is_err() {
            return Err(ConfigError::Invalid(format!(
                "initial_sample {} not in allowed sampling set {:?}",
                self.initial_sample,
                NumFrames::ALLOWED
            )));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: AgentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn digest(&self) -> String {
        short_digest(serde_json::to_string(self).expect("config serializes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_gives_defaults() {
        let cfg = AgentConfig::from_toml("").unwrap();
        assert_eq!(cfg, AgentConfig::default());
        assert_eq!((cfg.step_budget, cfg.n2, cfg.initial_sample), (10, 10, 30));
        assert_eq!(cfg.per_step_token_budget, 8000);
    }

    #[test]
    fn overrides_and_validation() {
        let cfg =
            AgentConfig::from_toml("step_budget = 4\n[models]\ncontroller = \"m1\"\n[decoding]\ntemperature = 0.2\n")
                .unwrap();
        assert_eq!(cfg.step_budget, 4);
        assert_eq!(cfg.models.controller.as_deref(), Some("m1"));
        assert_eq!(cfg.decoding.seed, Some(0));
        assert!(AgentConfig::from_toml("step_budget = 0").is_err());
        assert!(AgentConfig::from_toml("initial_sample = 45").is_err());
        assert!(AgentConfig::from_toml("stepbudget = 3").is_err());
    }
}
