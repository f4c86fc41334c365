//! JSON model files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{FullyMissingRule, HhmmParams};
use crate::error::{Error, Result};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelNames {
    pub continuous: Vec<String>,
    pub discrete: Vec<String>,
}

impl Default for ChannelNames {
    fn default() -> Self {
        Self {
            continuous: vec!["actigraphy".into(), "light".into()],
            discrete: vec!["steps".into(), "usage".into()],
        }
    }
}

/// On-disk model. Probabilities are linear, not log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub n_states: usize,
    pub pi: Vec<f64>,
    #[serde(rename = "A")]
    pub transitions: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub disc_probs: Vec<Vec<Vec<f64>>>,
    pub frozen_mask: Vec<Vec<Vec<bool>>>,
    pub channel_names: ChannelNames,
    #[serde(default, skip_serializing_if = "is_default_rule")]
    pub fully_missing: FullyMissingRule,
}

fn is_default_rule(r: &FullyMissingRule) -> bool {
    *r == FullyMissingRule::default()
}

impl ModelFile {
    pub fn new(params: &HhmmParams, channel_names: ChannelNames) -> Self {
        Self {
            version: MODEL_SCHEMA_VERSION,
            n_states: params.n_states(),
            pi: params.pi.clone(),
            transitions: params.transitions.clone(),
            means: params.means.clone(),
            covariances: params.covariances.clone(),
            disc_probs: params.disc_probs.clone(),
            frozen_mask: params.frozen.clone(),
            channel_names,
            fully_missing: params.fully_missing,
        }
    }

    /// Validated parameters. Rejects other schema versions.
    pub fn params(&self) -> Result<HhmmParams> {
        if self.version != MODEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.version,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        let p = HhmmParams {
            pi: self.pi.clone(),
            transitions: self.transitions.clone(),
            means: self.means.clone(),
            covariances: self.covariances.clone(),
            disc_probs: self.disc_probs.clone(),
            frozen: self.frozen_mask.clone(),
            fully_missing: self.fully_missing,
        };
        if p.n_states() != self.n_states {
            return Err(Error::invalid("n_states disagrees with pi"));
        }
        if self.channel_names.continuous.len() != p.n_continuous() || self.channel_names.discrete.len() != p.n_discrete() {
            return Err(Error::invalid("channel_names disagree with parameter shapes"));
        }
        p.validate()?;
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
