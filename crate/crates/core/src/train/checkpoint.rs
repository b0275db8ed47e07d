//! Checkpoint directory: `manifest.json`, `params.bin` and optional `adam.bin`.
//!
//! Tensors are stored row-major as little-endian `f32`, concatenated in
//! manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{MgamError, Result};
use crate::model::{Model, ModelConfig, Sizes};
use crate::tensor::Tensor;

use super::AdamState;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const ADAM_FILE: &str = "adam.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset into `params.bin`.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamInfo {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model: ModelConfig,
    pub sizes: Sizes,
    pub seed: u64,
    pub tensors: Vec<TensorEntry>,
    pub adam: Option<AdamInfo>,
    /// Resolved run configuration, stored verbatim.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: Option<AdamState>,
    pub config: serde_json::Value,
}

fn encode(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * tensors.iter().map(Tensor::len).sum::<usize>());
    for t in tensors {
        for &x in t.data() {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

fn decode(bytes: &[u8], shapes: &[[usize; 2]], what: &str) -> Result<Vec<Tensor>> {
    let total: usize = shapes.iter().map(|s| s[0] * s[1]).sum();
    if bytes.len() != 4 * total {
        return Err(MgamError::Checkpoint(format!(
            "{what}: expected {} bytes, found {}",
            4 * total,
            bytes.len()
        )));
    }
    let mut values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    shapes
        .iter()
        .map(|&[r, c]| Tensor::from_vec(r, c, values.by_ref().take(r * c).collect()))
        .collect()
}

pub fn save_checkpoint(
    dir: &Path,
    model: &Model,
    adam: Option<&AdamState>,
    config: &serde_json::Value,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut offset = 0;
    let tensors = model
        .params
        .iter()
        .map(|(name, t)| {
            let e = TensorEntry {
                name: name.to_string(),
                shape: t.shape(),
                offset,
            };
            offset += 4 * t.len();
            e
        })
        .collect();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model: model.config,
        sizes: model.sizes,
        seed: model.config.seed,
        tensors,
        adam: adam.map(|a| AdamInfo {
            step: a.step,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
        }),
        config: config.clone(),
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    fs::write(dir.join(PARAMS_FILE), encode(model.params.tensors()))?;
    let adam_path = dir.join(ADAM_FILE);
    match adam {
        Some(a) => {
            let mut both = a.m.clone();
            both.extend(a.v.iter().cloned());
            fs::write(adam_path, encode(&both))?;
        }
        None if adam_path.exists() => fs::remove_file(adam_path)?,
        None => {}
    }
    Ok(())
}

/// Reads a checkpoint. When `expect` is given, the stored tensors must fit that
/// model configuration; a mismatch names the first offending tensor.
pub fn load_checkpoint(dir: &Path, expect: Option<&ModelConfig>) -> Result<Checkpoint> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))
        .map_err(|e| MgamError::Checkpoint(format!("{}: {e}", dir.join(MANIFEST_FILE).display())))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| MgamError::Checkpoint(format!("corrupt manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(MgamError::Checkpoint(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let config = expect.copied().unwrap_or(manifest.model);
    let expected = Model::expected_shapes(&config, manifest.sizes);
    if expected.len() != manifest.tensors.len() {
        return Err(MgamError::Checkpoint(format!(
            "checkpoint holds {} tensors, configuration expects {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let mut offset = 0;
    for ((name, shape), entry) in expected.iter().zip(&manifest.tensors) {
        if *name != entry.name {
            return Err(MgamError::Checkpoint(format!(
                "tensor `{}` found where `{name}` was expected",
                entry.name
            )));
        }
        if *shape != entry.shape {
            return Err(MgamError::Checkpoint(format!(
                "tensor `{name}` has shape {:?} but the configuration requires {:?}",
                entry.shape, shape
            )));
        }
        if entry.offset != offset {
            return Err(MgamError::Checkpoint(format!("tensor `{name}` has a bad offset")));
        }
        offset += 4 * shape[0] * shape[1];
    }
    let shapes: Vec<[usize; 2]> = manifest.tensors.iter().map(|e| e.shape).collect();
    let bytes = fs::read(dir.join(PARAMS_FILE))?;
    let tensors = decode(&bytes, &shapes, PARAMS_FILE)?;
    let mut store = ParamStore::new();
    for (entry, t) in manifest.tensors.iter().zip(tensors) {
        store.push(entry.name.clone(), t);
    }
    let model = Model::from_store(config, manifest.sizes, store)?;

    let adam = match &manifest.adam {
        Some(info) => {
            let mut both_shapes = shapes.clone();
            both_shapes.extend_from_slice(&shapes);
            let bytes = fs::read(dir.join(ADAM_FILE))?;
            let mut moments = decode(&bytes, &both_shapes, ADAM_FILE)?;
            let v = moments.split_off(shapes.len());
            Some(AdamState {
                m: moments,
                v,
                step: info.step,
                beta1: info.beta1,
                beta2: info.beta2,
                eps: info.eps,
            })
        }
        None => None,
    };
    Ok(Checkpoint {
        model,
        adam,
        config: manifest.config,
    })
}
