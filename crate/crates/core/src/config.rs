//! The run-config file: one TOML document holding the schema mapping,
//! comparator tree, blocking, thresholds, evaluation settings, GA settings
//! and fusion policy.
//!
//! ```toml
//! [mapping]
//! class = "Restaurant"
//! aliases = { "schema:name" = "name" }
//!
//! [match]
//! acceptThreshold = 0.85
//! minComparableLeaves = 1
//! blocking = { strategy = "standard", keys = ["geohash(6)"] }
//!
//! [match.tree]
//! op = "and"
//! children = [
//!   { property = "name", comparator = "jaro-winkler", cleaners = ["lowercase"] },
//!   { property = "geo", comparator = "geo(250)" },
//! ]
//!
//! [evaluate]
//! world = "open"
//! thresholds = [0.8, 0.9]
//!
//! [fusion]
//! uniqueProps = ["name"]
//! perProperty = { geo = "average" }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::{GaParams, World};
use crate::fusion::FusionPolicy;
use crate::ingest::SchemaMapping;
use crate::pipeline::MatchConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default)]
    pub world: World,
    /// Cuts for threshold sweeps.
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
}

fn default_thresholds() -> Vec<f64> {
    vec![0.5, 0.8, 0.9, 1.0]
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            world: World::Open,
            thresholds: default_thresholds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub mapping: SchemaMapping,
    #[serde(rename = "match")]
    pub matching: MatchConfig,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learn: Option<GaParams>,
    #[serde(default)]
    pub fusion: FusionPolicy,
}

impl RunConfig {
    pub fn new(matching: MatchConfig) -> Self {
        Self {
            mapping: SchemaMapping::default(),
            matching,
            evaluate: EvaluateSection::default(),
            learn: None,
            fusion: FusionPolicy::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.mapping.validate().map_err(|e| invalid(&e))?;
        self.matching.validate().map_err(|e| invalid(&e))?;
        self.fusion.validate().map_err(|e| invalid(&e))?;
        if let Some(learn) = &self.learn {
            learn.validate().map_err(|e| invalid(&e))?;
        }
        if let Some(t) = self.evaluate.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(ConfigError::Invalid(format!("sweep threshold {t} outside [0, 1]")));
        }
        Ok(())
    }
}
