//! Binary checkpoint format.
//!
//! Layout: magic `DBCK`, version `u16` LE, header length `u32` LE, UTF-8
//! JSON header (config, epoch, best metric, array names/shapes/offsets),
//! then contiguous little-endian `f32` arrays. Arrays are keyed by name in
//! sorted order, so save → load → save is byte-identical.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_model, ModelConfig, ModelParams};
use crate::tensor::{AdamState, DiffTensor};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"DBCK";
pub const CHECKPOINT_VERSION: u16 = 1;

const ADAM_M_PREFIX: &str = "adam_m/";
const ADAM_V_PREFIX: &str = "adam_v/";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArrayEntry {
    shape: Vec<usize>,
    /// Offset in f32 elements from the start of the data section.
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u16,
    model_config: ModelConfig,
    epoch: usize,
    best_val_psnr: f64,
    adam_step: u64,
    arrays: BTreeMap<String, ArrayEntry>,
}

/// In-memory checkpoint: model parameters and optimizer moments as `f32`,
/// plus the training position they were captured at.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub epoch: usize,
    pub best_val_psnr: f64,
    pub adam_step: u64,
    arrays: BTreeMap<String, (Vec<usize>, Vec<f32>)>,
}

impl Checkpoint {
    /// Snapshot live training state (f64 → f32 truncation happens here).
    pub fn capture(params: &ModelParams, adam: &AdamState, epoch: usize, best_val_psnr: f64) -> Self {
        let mut arrays = BTreeMap::new();
        for (name, tensor) in params.tensors() {
            let vals: Vec<f32> = tensor.values().iter().map(|&v| v as f32).collect();
            arrays.insert(name.clone(), (tensor.shape().to_vec(), vals));
        }
        let (m, v) = adam.moments();
        for (name, buf) in m {
            let vals: Vec<f32> = buf.iter().map(|&v| v as f32).collect();
            arrays.insert(format!("{ADAM_M_PREFIX}{name}"), (vec![buf.len()], vals));
        }
        for (name, buf) in v {
            let vals: Vec<f32> = buf.iter().map(|&v| v as f32).collect();
            arrays.insert(format!("{ADAM_V_PREFIX}{name}"), (vec![buf.len()], vals));
        }
        Self {
            model_config: params.config().clone(),
            epoch,
            best_val_psnr,
            adam_step: adam.step_count(),
            arrays,
        }
    }

    /// Rebuild model parameters, validating that the stored arrays cover
    /// exactly the architecture's parameter names with matching shapes.
    pub fn to_model(&self) -> Result<ModelParams> {
        let skeleton = build_model(&self.model_config)?;
        let mut tensors = BTreeMap::new();
        for (name, reference) in skeleton.tensors() {
            let (shape, vals) = self.arrays.get(name).ok_or_else(|| {
                Error::Checkpoint(format!("parameter '{name}' missing from checkpoint"))
            })?;
            if shape != reference.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter '{name}' has shape {shape:?}, architecture needs {:?}",
                    reference.shape()
                )));
            }
            let values: Vec<f64> = vals.iter().map(|&v| v as f64).collect();
            tensors.insert(name.clone(), DiffTensor::parameter(shape.clone(), values)?);
        }
        for name in self.arrays.keys() {
            let is_adam = name.starts_with(ADAM_M_PREFIX) || name.starts_with(ADAM_V_PREFIX);
            if !is_adam && !skeleton.tensors().contains_key(name) {
                return Err(Error::Checkpoint(format!(
                    "checkpoint carries unknown parameter '{name}'"
                )));
            }
        }
        Ok(ModelParams::from_parts(self.model_config.clone(), tensors))
    }

    /// Rebuild optimizer state for resuming.
    pub fn to_adam(&self) -> AdamState {
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, (_, vals)) in &self.arrays {
            if let Some(param) = name.strip_prefix(ADAM_M_PREFIX) {
                m.insert(param.to_string(), vals.iter().map(|&x| x as f64).collect());
            } else if let Some(param) = name.strip_prefix(ADAM_V_PREFIX) {
                v.insert(param.to_string(), vals.iter().map(|&x| x as f64).collect());
            }
        }
        AdamState::from_parts(self.adam_step, m, v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries = BTreeMap::new();
        let mut offset = 0u64;
        for (name, (shape, vals)) in &self.arrays {
            entries.insert(
                name.clone(),
                ArrayEntry {
                    shape: shape.clone(),
                    offset,
                    len: vals.len() as u64,
                },
            );
            offset += vals.len() as u64;
        }
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            model_config: self.model_config.clone(),
            epoch: self.epoch,
            best_val_psnr: self.best_val_psnr,
            adam_step: self.adam_step,
            arrays: entries,
        };
        let header_json =
            serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut write = |bytes: &[u8]| file.write_all(bytes).map_err(|e| Error::io(path, e));
        write(&CHECKPOINT_MAGIC)?;
        write(&CHECKPOINT_VERSION.to_le_bytes())?;
        write(&(header_json.len() as u32).to_le_bytes())?;
        write(&header_json)?;
        for (_, vals) in self.arrays.values() {
            for v in vals {
                write(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 10 || bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!(
                "{}: not a checkpoint (bad magic)",
                path.display()
            )));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported checkpoint version {version}",
                path.display()
            )));
        }
        let header_len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
        let header_end = 10 + header_len;
        if bytes.len() < header_end {
            return Err(Error::Checkpoint(format!("{}: truncated header", path.display())));
        }
        let header: Header = serde_json::from_slice(&bytes[10..header_end])
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let data = &bytes[header_end..];
        let mut arrays = BTreeMap::new();
        for (name, entry) in &header.arrays {
            let start = entry.offset as usize * 4;
            let end = start + entry.len as usize * 4;
            if data.len() < end {
                return Err(Error::Checkpoint(format!(
                    "{}: array '{name}' runs past end of file",
                    path.display()
                )));
            }
            let vals: Vec<f32> = data[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let expected: usize = entry.shape.iter().product();
            if expected != vals.len() {
                return Err(Error::Checkpoint(format!(
                    "{}: array '{name}' shape {:?} does not match {} stored values",
                    path.display(),
                    entry.shape,
                    vals.len()
                )));
            }
            arrays.insert(name.clone(), (entry.shape.clone(), vals));
        }
        Ok(Self {
            model_config: header.model_config,
            epoch: header.epoch,
            best_val_psnr: header.best_val_psnr,
            adam_step: header.adam_step,
            arrays,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::adam_step;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("deblur_ckpt_{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn trained_checkpoint() -> Checkpoint {
        let config = ModelConfig::reduced(3);
        let mut params = build_model(&config).unwrap();
        let mut adam = AdamState::new();
        // one step so the moments are non-trivial
        for t in params.tensors().values() {
            t.accumulate_grad(|g| g.iter_mut().for_each(|v| *v += 0.01));
        }
        let mut tensors = params.tensors().clone();
        adam_step(&mut tensors, &mut adam, 1e-3, 0.9, 0.999, 1e-8).unwrap();
        *params.tensors_mut() = tensors;
        Checkpoint::capture(&params, &adam, 4, 27.5)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let ckpt = trained_checkpoint();
        let p1 = tmp("a.dbck");
        let p2 = tmp("b.dbck");
        ckpt.save(&p1).unwrap();
        let loaded = Checkpoint::load(&p1).unwrap();
        loaded.save(&p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(loaded, ckpt);
    }

    #[test]
    fn round_trip_restores_model_and_optimizer() {
        let ckpt = trained_checkpoint();
        let params = ckpt.to_model().unwrap();
        assert_eq!(params.param_count(), build_model(&ckpt.model_config).unwrap().param_count());
        let adam = ckpt.to_adam();
        assert_eq!(adam.step_count(), 1);
        // f32 storage: restored values equal the f32-truncated originals
        for (name, tensor) in params.tensors() {
            for v in tensor.values() {
                assert_eq!(*v, *v as f32 as f64, "{name} not f32-exact");
            }
        }
    }

    #[test]
    fn missing_parameters_and_bad_magic_are_rejected() {
        let ckpt = trained_checkpoint();
        let mut broken = ckpt.clone();
        broken.arrays.remove("final_conv.bias");
        assert!(matches!(broken.to_model(), Err(Error::Checkpoint(_))));

        let mut alien = ckpt.clone();
        alien
            .arrays
            .insert("mystery.weight".into(), (vec![1], vec![0.0]));
        assert!(matches!(alien.to_model(), Err(Error::Checkpoint(_))));

        let path = tmp("bad.dbck");
        std::fs::write(&path, b"NOPE my data").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }
}
