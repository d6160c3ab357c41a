//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "LAQGCKPT"
//! version   u32
//! json_len  u32, then json_len bytes of UTF-8 JSON (the model config)
//! count     u32
//! count × { name_len u32, name bytes, ndim u32, ndim × u64 dims, numel × f32 }
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"LAQGCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("checkpoint does not match the model: {0}")]
    Mismatch(String),
}

/// A decoded checkpoint: config header plus named f32 arrays.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub version: u32,
    pub config: serde_json::Value,
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
}

pub fn save(path: &Path, config: &serde_json::Value, store: &ParamStore) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(&mut w, config, store)?;
    w.flush()?;
    Ok(())
}

pub fn write_to(w: &mut impl Write, config: &serde_json::Value, store: &ParamStore) -> Result<(), CheckpointError> {
    let json = serde_json::to_vec(config).map_err(|e| CheckpointError::Format(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (_, name, tensor) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.ndim() as u32).to_le_bytes())?;
        for &d in tensor.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in tensor.to_f32_vec() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    read_from(&mut BufReader::new(File::open(path)?))
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_from(r: &mut impl Read) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Format("bad magic bytes".into()));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Format(format!("unsupported format version {version}")));
    }
    let json_len = read_u32(r)? as usize;
    let mut json = vec![0u8; json_len];
    r.read_exact(&mut json)?;
    let config = serde_json::from_slice(&json).map_err(|e| CheckpointError::Format(e.to_string()))?;
    let count = read_u32(r)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| CheckpointError::Format(e.to_string()))?;
        let ndim = read_u32(r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut raw = vec![0u8; numel * 4];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push((name, shape, data));
    }
    Ok(Checkpoint { version, config, tensors })
}

impl Checkpoint {
    /// Copies every tensor into `store`, which must hold exactly the same
    /// names with the same shapes.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<(), CheckpointError> {
        if self.tensors.len() != store.len() {
            return Err(CheckpointError::Mismatch(format!(
                "checkpoint has {} tensors, model expects {}",
                self.tensors.len(),
                store.len()
            )));
        }
        for (name, shape, data) in &self.tensors {
            let id = store
                .id(name)
                .ok_or_else(|| CheckpointError::Mismatch(format!("unknown parameter {name}")))?;
            if store.get(id).shape() != shape.as_slice() {
                return Err(CheckpointError::Mismatch(format!(
                    "{name}: checkpoint shape {shape:?}, model shape {:?}",
                    store.get(id).shape()
                )));
            }
            let values = data.iter().map(|&v| v as f64).collect();
            let tensor = Tensor::new(shape.clone(), values).map_err(|e| CheckpointError::Format(e.to_string()))?;
            store.set(id, tensor).map_err(|e| CheckpointError::Mismatch(e.to_string()))?;
        }
        Ok(())
    }
}
