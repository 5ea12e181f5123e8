//! JSON checkpoints: configuration, preprocessing state and named weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, ModelParams};
use crate::data::Preprocessor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    /// Row-major values.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub preprocessing: Preprocessor,
    pub params: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new(params: &ModelParams, preprocessing: &Preprocessor) -> Result<Self> {
        if preprocessing.num_features() != params.config().num_features {
            return Err(Error::Config(format!(
                "preprocessing covers {} features, model has {}",
                preprocessing.num_features(),
                params.config().num_features
            )));
        }
        Ok(Self {
            format_version: CHECKPOINT_VERSION,
            config: params.config().clone(),
            preprocessing: preprocessing.clone(),
            params: params
                .entries()
                .iter()
                .map(|e| NamedArray {
                    name: e.name.clone(),
                    shape: e.shape.clone(),
                    data: params.values()[e.offset..e.offset + e.len()].to_vec(),
                })
                .collect(),
        })
    }

    /// Rebuilds the parameters, checking every array against the layout
    /// implied by the configuration.
    pub fn model_params(&self) -> Result<ModelParams> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format_version {} (expected {CHECKPOINT_VERSION})",
                self.format_version
            )));
        }
        let mut params = ModelParams::zeros(&self.config)?;
        if self.params.len() != params.entries().len() {
            return Err(Error::Config(format!(
                "checkpoint has {} parameter arrays, configuration implies {}",
                self.params.len(),
                params.entries().len()
            )));
        }
        let entries = params.entries().to_vec();
        for (e, a) in entries.iter().zip(&self.params) {
            if e.name != a.name || e.shape != a.shape || a.data.len() != e.len() {
                return Err(Error::Config(format!(
                    "checkpoint array {} {:?} ({} values) does not match expected {} {:?}",
                    a.name,
                    a.shape,
                    a.data.len(),
                    e.name,
                    e.shape
                )));
            }
            if a.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("checkpoint array {} has non-finite values", a.name)));
            }
            params.values_mut()[e.offset..e.offset + e.len()].copy_from_slice(&a.data);
        }
        if self.preprocessing.num_features() != self.config.num_features {
            return Err(Error::Config("checkpoint preprocessing does not match the model".into()));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        ck.model_params()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
