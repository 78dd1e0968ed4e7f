//! Binary checkpoint container.
//!
//! Layout, all integers little endian:
//!
//! | bytes      | content                                   |
//! |------------|-------------------------------------------|
//! | 8          | magic `HTICKPT\0`                         |
//! | 4 (u32)    | format version                            |
//! | 8 (u64)    | header length `h`                         |
//! | h          | UTF-8 JSON [`CheckpointHeader`]           |
//! | rest       | tensor data, in header order, raw LE      |

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HtiError, Result};
use crate::scalar::Scalar;

use super::{HtiModel, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HTICKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub frozen_prefix: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// `"f32"` or `"f64"`.
    pub dtype: String,
    pub config: ModelConfig,
    /// Free-form training metadata (hyperparameters, best epoch, ...).
    #[serde(default)]
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

impl<S: Scalar> HtiModel<S> {
    pub fn write_checkpoint<W: Write>(&self, mut w: W, meta: serde_json::Value) -> Result<()> {
        let header = CheckpointHeader {
            dtype: S::DTYPE.to_string(),
            config: self.config.clone(),
            meta,
            tensors: self
                .tape
                .params()
                .iter()
                .map(|p| TensorEntry {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    frozen_prefix: p.frozen_prefix,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        let mut buf = Vec::new();
        for p in self.tape.params() {
            buf.clear();
            for &x in p.value.data() {
                x.write_le(&mut buf);
            }
            w.write_all(&buf)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &Path, meta: serde_json::Value) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_checkpoint(std::io::BufWriter::new(file), meta)
    }

    /// Reads a checkpoint of either dtype, converting to `S`.
    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(Self, CheckpointHeader)> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(HtiError::format("not a checkpoint file (bad magic)"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(HtiError::format(format!(
                "checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: CheckpointHeader = serde_json::from_slice(&json)?;
        let model = match header.dtype.as_str() {
            "f32" => read_tensors::<f32, _>(&header, &mut r)?.cast(),
            "f64" => read_tensors::<f64, _>(&header, &mut r)?.cast(),
            other => return Err(HtiError::format(format!("unknown dtype '{other}'"))),
        };
        Ok((model, header))
    }

    pub fn load_checkpoint(path: &Path) -> Result<(Self, CheckpointHeader)> {
        let file = std::fs::File::open(path)?;
        Self::read_checkpoint(std::io::BufReader::new(file))
    }
}

fn read_tensors<T: Scalar, R: Read>(header: &CheckpointHeader, r: &mut R) -> Result<HtiModel<T>> {
    let mut model = HtiModel::<T>::new(header.config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
    if model.tape.len() != header.tensors.len() {
        return Err(HtiError::format(format!(
            "checkpoint has {} tensors, architecture needs {}",
            header.tensors.len(),
            model.tape.len()
        )));
    }
    let mut buf = Vec::new();
    for entry in &header.tensors {
        let id = model
            .tape
            .find(&entry.name)
            .ok_or_else(|| HtiError::format(format!("unexpected tensor '{}'", entry.name)))?;
        if model.tape.param(id).value.shape() != entry.shape.as_slice() {
            return Err(HtiError::format(format!(
                "tensor '{}' has shape {:?}, expected {:?}",
                entry.name,
                entry.shape,
                model.tape.param(id).value.shape()
            )));
        }
        let n: usize = entry.shape.iter().product();
        buf.resize(n * T::BYTES, 0);
        r.read_exact(&mut buf)?;
        for (dst, chunk) in model.tape.value_mut(id).iter_mut().zip(buf.chunks_exact(T::BYTES)) {
            *dst = T::read_le(chunk);
        }
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(HtiError::format("trailing bytes after checkpoint data"));
    }
    Ok(model)
}
