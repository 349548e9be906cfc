//! JSON checkpoints: a shape manifest followed by the flat parameter vector.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelParams, ModelSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ModelSpec,
    pub arrays: Vec<ArraySpec>,
    pub param_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams) -> Self {
        Self {
            manifest: Manifest {
                spec: params.spec().clone(),
                arrays: params.arrays(),
                param_count: params.len(),
            },
            params: params.flatten(),
        }
    }

    /// Rebuilds the parameters, checking the manifest against the layout the
    /// spec implies and, if given, against the spec the caller expects.
    pub fn into_params(self, expected: Option<&ModelSpec>) -> Result<ModelParams> {
        let m = &self.manifest;
        if let Some(spec) = expected {
            if spec != &m.spec {
                return Err(Error::Config(format!(
                    "checkpoint model spec {:?} does not match configured spec {:?}",
                    m.spec, spec
                )));
            }
        }
        if m.param_count != self.params.len() {
            return Err(Error::shape(
                "checkpoint params",
                m.param_count,
                self.params.len(),
            ));
        }
        let params = ModelParams::unflatten(&m.spec, &self.params)?;
        if params.arrays() != m.arrays {
            return Err(Error::shape(
                "checkpoint manifest arrays",
                format!("{:?}", params.arrays()),
                format!("{:?}", m.arrays),
            ));
        }
        Ok(params)
    }
}

pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let json = serde_json::to_string(&Checkpoint::from_params(params))?;
    fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected: Option<&ModelSpec>) -> Result<ModelParams> {
    let text = fs::read_to_string(path)?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    ck.into_params(expected)
}
