//! Checkpoint persistence.
//!
//! A checkpoint is a pair of files sharing a stem: `<stem>.json` holds the
//! manifest (model config plus a parameter index), `<stem>.bin` holds every
//! parameter as little-endian 64-bit floats, concatenated in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FusionModel, ModelConfig};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the blob, in elements.
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    model: ModelConfig,
    params: Vec<ParamEntry>,
}

const FORMAT_VERSION: u32 = 1;

fn checkpoint_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

/// Writes `<stem>.json` and `<stem>.bin`.
pub fn save_checkpoint(model: &FusionModel, stem: &Path) -> Result<()> {
    let mut entries = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    let mut offset = 0usize;
    for (name, tensor) in model.params() {
        entries.push(ParamEntry {
            name,
            shape: tensor.shape().to_vec(),
            offset,
            len: tensor.numel(),
        });
        offset += tensor.numel();
        for &v in tensor.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        model: model.config().clone(),
        params: entries,
    };
    if let Some(parent) = stem.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(
        stem.with_extension("json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    fs::write(stem.with_extension("bin"), blob)?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(stem: &Path) -> Result<FusionModel> {
    let json_path = stem.with_extension("json");
    let bin_path = stem.with_extension("bin");
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&json_path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(checkpoint_err(
            &json_path,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    let blob = fs::read(&bin_path)?;
    if blob.len() % 8 != 0 {
        return Err(checkpoint_err(&bin_path, "blob length not a multiple of 8"));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();

    let mut model = FusionModel::new(manifest.model)?;
    {
        let names: Vec<String> = model.params().iter().map(|(n, _)| n.clone()).collect();
        let mut tensors = model.params_mut();
        if names.len() != manifest.params.len() {
            return Err(checkpoint_err(
                &json_path,
                format!(
                    "manifest lists {} parameters, model has {}",
                    manifest.params.len(),
                    names.len()
                ),
            ));
        }
        for ((entry, name), tensor) in manifest.params.iter().zip(&names).zip(&mut tensors) {
            if &entry.name != name || entry.shape != tensor.shape() {
                return Err(checkpoint_err(
                    &json_path,
                    format!(
                        "parameter {} ({:?}) does not match model parameter {} ({:?})",
                        entry.name,
                        entry.shape,
                        name,
                        tensor.shape()
                    ),
                ));
            }
            let end = entry.offset + entry.len;
            if end > values.len() {
                return Err(checkpoint_err(&bin_path, "blob shorter than manifest"));
            }
            tensor
                .data_mut()
                .copy_from_slice(&values[entry.offset..end]);
        }
    }
    Ok(model)
}
