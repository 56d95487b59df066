use std::fs;
use std::path::Path;

use numcore::{Real, Tensor};
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig};
use crate::dualpath::{PathSelector, Scheme};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const WEIGHTS: &str = "weights.bin";

/// One named tensor inside `weights.bin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into `weights.bin`.
    pub offset: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingMeta {
    pub epoch: usize,
    pub best_train_loss: Option<f64>,
    pub best_val_loss: Option<f64>,
    pub strategy: Option<String>,
    pub path: Option<PathSelector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config: ModelConfig,
    pub params: Vec<ParamEntry>,
    #[serde(default)]
    pub meta: TrainingMeta,
}

/// Writes `dir/manifest.json` and `dir/weights.bin` (little-endian f32).
pub fn save_checkpoint<T: Real>(model: &Model<T>, meta: &TrainingMeta, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut blob = Vec::with_capacity(model.num_params() * 4);
    let mut params = Vec::with_capacity(model.params.len());
    for (_, p) in model.params.iter() {
        params.push(ParamEntry {
            name: p.name.clone(),
            shape: p.tensor.shape().to_vec(),
            offset: blob.len(),
        });
        for v in p.tensor.data() {
            blob.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        params,
        meta: meta.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let weights = dir.join(WEIGHTS);
    fs::write(&weights, blob).map_err(|e| Error::io(weights, e))?;
    let path = dir.join(MANIFEST);
    fs::write(&path, json).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint directory. Any inconsistency is an error and no model
/// is returned.
pub fn load_checkpoint<T: Real>(dir: &Path) -> Result<(Model<T>, CheckpointManifest)> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", mpath.display())))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {}",
            manifest.format_version
        )));
    }
    let wpath = dir.join(WEIGHTS);
    let blob = fs::read(&wpath).map_err(|e| Error::io(&wpath, e))?;

    let mut model = Model::<T>::new(manifest.config.clone(), 0)?;
    if manifest.params.len() != model.params.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, config expects {}",
            manifest.params.len(),
            model.params.len()
        )));
    }
    let mut entries: Vec<&ParamEntry> = manifest.params.iter().collect();
    entries.sort_by_key(|e| e.offset);
    let mut next = 0;
    let mut loaded = Vec::with_capacity(entries.len());
    for e in entries {
        let id = model
            .params
            .find(&e.name)
            .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {:?}", e.name)))?;
        let want = model.params.get(id).shape();
        if want != e.shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "tensor {:?} has shape {:?}, config expects {want:?}",
                e.name, e.shape
            )));
        }
        if e.offset != next {
            return Err(Error::Checkpoint(format!(
                "tensor {:?} at byte {} leaves a gap or overlap (expected {next})",
                e.name, e.offset
            )));
        }
        let bytes = e.shape.iter().product::<usize>() * 4;
        let end = next + bytes;
        let raw = blob.get(next..end).ok_or_else(|| {
            Error::Checkpoint(format!("weights truncated: {} bytes, need {end}", blob.len()))
        })?;
        let data: Vec<T> = raw
            .chunks_exact(4)
            .map(|b| T::lit(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        loaded.push((id, Tensor::new(&e.shape, data)?));
        next = end;
    }
    if next != blob.len() {
        return Err(Error::Checkpoint(format!(
            "weights hold {} bytes, manifest covers {next}",
            blob.len()
        )));
    }
    for (id, t) in loaded {
        if !t.is_finite() {
            return Err(Error::Checkpoint(format!("tensor {:?} is not finite", model.params.name(id))));
        }
        *model.params.get_mut(id) = t;
    }
    Ok((model, manifest))
}

/// Builds a dual-mode model from a pretrained offline model.
///
/// Every tensor present in both is copied by name. Tensors only the target
/// has (the decomposed online projections) keep their fresh initialization.
pub fn init_from_offline<T: Real>(source: &Model<T>, target: &ModelConfig, seed: u64) -> Result<Model<T>> {
    if source.config.with_scheme(Scheme::Standard) != target.with_scheme(Scheme::Standard) {
        return Err(Error::Checkpoint(
            "pretrained model and target differ in more than the block scheme".into(),
        ));
    }
    let mut model = Model::<T>::new(target.clone(), seed)?;
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        let name = model.params.name(id).to_string();
        match source.params.find(&name) {
            Some(src) => {
                let t = source.params.get(src);
                if t.shape() != model.params.get(id).shape() {
                    return Err(Error::Checkpoint(format!("tensor {name:?} changed shape")));
                }
                *model.params.get_mut(id) = t.clone();
            }
            None if name.contains(".fc_online.") => {}
            None => return Err(Error::Checkpoint(format!("pretrained model lacks tensor {name:?}"))),
        }
    }
    Ok(model)
}
