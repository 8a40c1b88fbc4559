use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::error::{Error, Result};
use crate::layers::Params;
use crate::linalg::Matrix;
use crate::yat::ScaleMode;

pub const CHECKPOINT_FORMAT: &str = "nmk-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";
const TENSORS: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Offset in f64 elements into the binary file.
    pub offset: usize,
}

impl TensorEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub kind: String,
    pub shape: [usize; 2],
    pub alpha: Option<f64>,
    pub epsilon: Option<f64>,
    pub scale_mode: Option<ScaleMode>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    /// The model with tensor data stripped; restored from the binary file.
    pub model: Model,
    pub layers: Vec<LayerEntry>,
    pub tensors: Vec<TensorEntry>,
}

fn layer_entries(model: &Model) -> Vec<LayerEntry> {
    let mut out = Vec::new();
    let yats = model.yat_layers();
    let mut yi = 0;
    model.visit(&mut |name, shape, _| {
        if let Some(prefix) = name.strip_suffix(".kernel") {
            let y = yats[yi];
            yi += 1;
            out.push(LayerEntry {
                name: prefix.to_string(),
                kind: "yat".into(),
                shape: [shape[0], shape[1]],
                alpha: Some(y.alpha),
                epsilon: Some(y.epsilon),
                scale_mode: Some(y.scale_mode),
            });
        } else if let Some(prefix) = name.strip_suffix(".weight") {
            out.push(LayerEntry {
                name: prefix.to_string(),
                kind: "dense".into(),
                shape: [shape[0], shape[1]],
                alpha: None,
                epsilon: None,
                scale_mode: None,
            });
        }
    });
    out
}

/// Writes `manifest.json` and `params.bin` (little-endian f64, declaration order).
pub fn save_checkpoint(dir: &Path, model: &Model) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tensors = Vec::new();
    let mut bytes = Vec::with_capacity(8 * model.param_count());
    let mut offset = 0;
    model.visit(&mut |name, shape, data| {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
        });
        offset += data.len();
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    });
    let mut skeleton = model.clone();
    skeleton.visit_mut(&mut |_, p| p.fill(0.0));
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        layers: layer_entries(model),
        model: skeleton,
        tensors,
    };
    let mpath = dir.join(MANIFEST);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&mpath, e))?;
    let bpath = dir.join(TENSORS);
    fs::write(&bpath, bytes).map_err(|e| Error::io(&bpath, e))?;
    Ok(())
}

fn read_parts(dir: &Path) -> Result<(CheckpointManifest, Vec<f64>)> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)?;
    if manifest.format != CHECKPOINT_FORMAT || manifest.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "{}: unsupported checkpoint {} v{}",
            mpath.display(),
            manifest.format,
            manifest.version
        )));
    }
    let bpath = dir.join(TENSORS);
    let bytes = fs::read(&bpath).map_err(|e| Error::io(&bpath, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format(format!("{}: length is not a multiple of 8", bpath.display())));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let needed: usize = manifest.tensors.iter().map(|t| t.offset + t.len()).max().unwrap_or(0);
    if values.len() < needed {
        return Err(Error::Consistency(format!(
            "{} holds {} values, manifest needs {needed}",
            bpath.display(),
            values.len()
        )));
    }
    Ok((manifest, values))
}

/// Parses and validates `manifest.json` together with the tensor file.
pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    Ok(read_parts(dir)?.0)
}

pub fn load_checkpoint(dir: &Path) -> Result<Model> {
    let (manifest, values) = read_parts(dir)?;
    let mut model = manifest.model;
    let mut idx = 0;
    let mut mismatch = None;
    model.visit_mut(&mut |name, p| {
        match manifest.tensors.get(idx) {
            Some(t) if t.name == name && t.len() == p.len() => {
                p.copy_from_slice(&values[t.offset..t.offset + t.len()]);
            }
            _ => {
                mismatch.get_or_insert_with(|| name.to_string());
            }
        }
        idx += 1;
    });
    if let Some(name) = mismatch {
        return Err(Error::Consistency(format!("checkpoint tensor list disagrees with model at {name}")));
    }
    Ok(model)
}

/// Reads a two-dimensional tensor such as `layer2.kernel` as a matrix.
pub fn read_tensor(dir: &Path, name: &str) -> Result<Matrix> {
    let (manifest, values) = read_parts(dir)?;
    let t = manifest
        .tensors
        .iter()
        .find(|t| t.name == name)
        .ok_or_else(|| {
            let names: Vec<&str> = manifest
                .tensors
                .iter()
                .filter(|t| t.shape.len() == 2)
                .map(|t| t.name.as_str())
                .collect();
            Error::Config(format!("no tensor {name}; matrices: {}", names.join(", ")))
        })?;
    if t.shape.len() != 2 {
        return Err(Error::Config(format!("tensor {name} has shape {:?}, not a matrix", t.shape)));
    }
    Matrix::from_vec(t.shape[0], t.shape[1], values[t.offset..t.offset + t.len()].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::{HeadKind, ModelSpec};
    use crate::linalg::RngState;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let (m, _) = Model::build(&ModelSpec::e_mlp(&[5]), 3, 4, HeadKind::Softermax, false, RngState::new(0)).unwrap();
        save_checkpoint(dir.path(), &m).unwrap();
        assert_eq!(load_checkpoint(dir.path()).unwrap(), m);
        let k = read_tensor(dir.path(), "layer1.kernel").unwrap();
        assert_eq!(k.shape(), (4, 5));
        assert!(read_tensor(dir.path(), "layer1.alpha").is_err());
        assert!(read_tensor(dir.path(), "nope").is_err());
        let bytes = fs::read(dir.path().join("params.bin")).unwrap();
        assert_eq!(bytes.len(), 8 * m.param_count());
        let first = f64::from_le_bytes(bytes[..8].try_into().unwrap());
        assert_eq!(first, m.flatten()[0]);
    }
}
