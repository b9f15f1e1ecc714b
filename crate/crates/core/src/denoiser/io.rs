//! Model files: a JSON manifest plus a `.raw` payload of little-endian f64
//! values in manifest tensor order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, DenoiserParams, TensorSpec, TrainConfig};
use crate::diffusion::ScheduleSpec;
use crate::error::{Error, Result};
use crate::volume::payload_path;

pub const MODEL_FORMAT: &str = "pcdiff-denoiser/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub config: TrainConfig,
    pub seed: u64,
    pub examples: usize,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format: String,
    pub architecture: Architecture,
    pub tensors: Vec<TensorSpec>,
    pub parameter_count: usize,
    pub dtype: String,
    pub init_seed: u64,
    pub schedule: Option<ScheduleSpec>,
    pub training: Option<TrainingRecord>,
}

/// Parameters together with the schedule they were trained for.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: DenoiserParams,
    pub schedule: Option<ScheduleSpec>,
    pub training: Option<TrainingRecord>,
}

impl Model {
    pub fn manifest(&self) -> ModelManifest {
        let p = &self.params;
        ModelManifest {
            format: MODEL_FORMAT.into(),
            architecture: p.arch().clone(),
            tensors: p.layout(),
            parameter_count: p.len(),
            dtype: "float64-le".into(),
            init_seed: p.init_seed(),
            schedule: self.schedule,
            training: self.training.clone(),
        }
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(&model.manifest())?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::with_capacity(model.params.len() * 8);
    for v in model.params.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let raw = payload_path(path);
    fs::write(&raw, bytes).map_err(|e| Error::io(raw, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: ModelManifest = serde_json::from_str(&text)?;
    let bad = |message: String| Error::Header {
        path: path.to_path_buf(),
        message,
    };
    if manifest.format != MODEL_FORMAT {
        return Err(bad(format!("unknown model format {:?}", manifest.format)));
    }
    if manifest.tensors != manifest.architecture.layout()
        || manifest.parameter_count != manifest.architecture.parameter_count()
    {
        return Err(bad("tensor layout disagrees with the architecture".into()));
    }
    let raw = payload_path(path);
    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    if bytes.len() != manifest.parameter_count * 8 {
        return Err(Error::SizeMismatch {
            expected: manifest.parameter_count * 8,
            found: bytes.len(),
        });
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let params = DenoiserParams::from_values(manifest.architecture, values, manifest.init_seed)?;
    Ok(Model {
        params,
        schedule: manifest.schedule,
        training: manifest.training,
    })
}
