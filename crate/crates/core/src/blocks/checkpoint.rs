use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::block::BlockConfig;
use super::classifier::{Classifier, ModelConfig};
use crate::autodiff::Tensor;
use crate::error::{DgnError, Result};

pub const CHECKPOINT_SCHEMA: &str = "dgn.checkpoint/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub model: ModelConfig,
    pub blocks: Vec<BlockConfig>,
    pub params: Vec<ParamRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn from_model(model: &Classifier) -> Self {
        Checkpoint {
            schema: CHECKPOINT_SCHEMA.into(),
            model: model.config.clone(),
            blocks: model.blocks.iter().map(|b| b.config.clone()).collect(),
            params: model
                .params
                .iter()
                .map(|(name, t)| ParamRecord {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<Classifier> {
        if self.schema != CHECKPOINT_SCHEMA {
            return Err(DgnError::Invalid(format!(
                "unsupported checkpoint schema '{}'",
                self.schema
            )));
        }
        let mut model = Classifier::new(self.model, 0)?;
        let expected: Vec<BlockConfig> = model.blocks.iter().map(|b| b.config.clone()).collect();
        if expected != self.blocks {
            return Err(DgnError::Invalid("block configs do not match the model config".into()));
        }
        if self.params.len() != model.params.len() {
            return Err(DgnError::Invalid(format!(
                "checkpoint has {} tensors, model needs {}",
                self.params.len(),
                model.params.len()
            )));
        }
        let ids: Vec<_> = model.params.ids().collect();
        for (id, rec) in ids.into_iter().zip(self.params) {
            let want = model.params.get(id).shape().to_vec();
            if rec.name != model.params.name(id) || rec.shape != want {
                return Err(DgnError::Invalid(format!(
                    "tensor '{}' {:?} does not match '{}' {:?}",
                    rec.name,
                    rec.shape,
                    model.params.name(id),
                    want
                )));
            }
            *model.params.get_mut(id) = Tensor::new(rec.shape, rec.values)?;
        }
        Ok(model)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
