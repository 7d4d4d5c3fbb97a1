//! JSON checkpoints. Tensors are stored with their shape and a base64
//! payload of little-endian `f64` values in row-major order.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use matcap_core::rng::RngState;
use matcap_core::Mat;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelConfig};
use crate::optim::RmsProp;
use crate::train::{TrainConfig, Trainer};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad checkpoint: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: String,
}

impl Tensor {
    pub fn encode(name: &str, m: &Mat) -> Self {
        let bytes: Vec<u8> = m.data().iter().flat_map(|x| x.to_le_bytes()).collect();
        Tensor {
            name: name.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Mat, CheckpointError> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| CheckpointError::Invalid(format!("{}: {e}", self.name)))?;
        if bytes.len() != self.rows * self.cols * 8 {
            return Err(CheckpointError::Invalid(format!(
                "{}: {} bytes for a {}x{} tensor",
                self.name,
                bytes.len(),
                self.rows,
                self.cols
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Mat::from_vec(self.rows, self.cols, data).map_err(|e| CheckpointError::Invalid(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub decay: f64,
    pub eps: f64,
    pub acc: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_config: ModelConfig,
    pub train_config: Option<TrainConfig>,
    pub params: Vec<Tensor>,
    pub optimizer: Option<OptimizerState>,
    pub rng: Option<RngState>,
    pub iteration: usize,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            model_config: model.config().clone(),
            train_config: None,
            params: encode_all(model, model.params()),
            optimizer: None,
            rng: None,
            iteration: 0,
        }
    }

    pub fn from_trainer(t: &Trainer) -> Self {
        Checkpoint {
            train_config: Some(t.config.clone()),
            optimizer: Some(OptimizerState {
                decay: t.optimizer.decay,
                eps: t.optimizer.eps,
                acc: encode_all(&t.model, &t.optimizer.acc),
            }),
            rng: Some(t.rng.state()),
            iteration: t.iteration,
            ..Self::from_model(&t.model)
        }
    }

    pub fn model(&self) -> Result<Model, CheckpointError> {
        if self.format_version != FORMAT_VERSION {
            return Err(CheckpointError::Invalid(format!(
                "format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.model_config.validate().map_err(CheckpointError::Invalid)?;
        let mut model = Model::new(self.model_config.clone(), 0);
        let params = decode_all(&model, &self.params)?;
        model.set_params(params).map_err(|e| CheckpointError::Invalid(e.to_string()))?;
        Ok(model)
    }

    /// Rebuilds a trainer; needs the training sections.
    pub fn trainer(&self) -> Result<Trainer, CheckpointError> {
        let model = self.model()?;
        let missing = |what: &str| CheckpointError::Invalid(format!("no {what} section"));
        let config = self.train_config.clone().ok_or_else(|| missing("train_config"))?;
        let opt = self.optimizer.as_ref().ok_or_else(|| missing("optimizer"))?;
        let rng = self.rng.clone().ok_or_else(|| missing("rng"))?;
        let optimizer = RmsProp {
            decay: opt.decay,
            eps: opt.eps,
            acc: decode_all(&model, &opt.acc)?,
        };
        Trainer::from_parts(config, model, optimizer, rng, self.iteration)
            .map_err(|e| CheckpointError::Invalid(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String, CheckpointError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self, CheckpointError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn encode_all(model: &Model, ms: &[Mat]) -> Vec<Tensor> {
    model.specs().iter().zip(ms).map(|(s, m)| Tensor::encode(&s.name, m)).collect()
}

fn decode_all(model: &Model, ts: &[Tensor]) -> Result<Vec<Mat>, CheckpointError> {
    let specs = model.specs();
    if ts.len() != specs.len() {
        return Err(CheckpointError::Invalid(format!(
            "{} tensors for a model with {} parameters",
            ts.len(),
            specs.len()
        )));
    }
    specs
        .iter()
        .zip(ts)
        .map(|(s, t)| {
            if s.name != t.name || (s.rows, s.cols) != (t.rows, t.cols) {
                return Err(CheckpointError::Invalid(format!(
                    "expected {} {}x{}, found {} {}x{}",
                    s.name, s.rows, s.cols, t.name, t.rows, t.cols
                )));
            }
            t.decode()
        })
        .collect()
}
