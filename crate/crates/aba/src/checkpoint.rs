//! Classifier checkpoints: a flat binary container of named tensors with a
//! JSON header, magic string "ABACKPT1".
//!
//! Layout: 8 magic bytes, u32 little-endian header length, header JSON, then
//! the raw little-endian tensor payload at the offsets the header declares.

use crate::classifier::{Architecture, ClassifierParams};
use crate::error::{AbaError, Result};
use crate::tensor::{Dtype, Scalar, Tensor};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"ABACKPT1";

#[derive(Serialize, Deserialize)]
struct Header {
    dtype: String,
    arch: Architecture,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    byte_len: u64,
}

fn scalar_width(dtype: Dtype) -> usize {
    match dtype {
        Dtype::F32 => 4,
        Dtype::F64 => 8,
    }
}

pub fn save<T: Scalar>(path: &Path, params: &ClassifierParams<T>) -> Result<()> {
    let named = params.named()?;
    let width = scalar_width(T::DTYPE);
    let mut entries = Vec::with_capacity(named.len());
    let mut offset = 0u64;
    for (name, t) in &named {
        let byte_len = (t.numel() * width) as u64;
        entries.push(TensorEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            offset,
            byte_len,
        });
        offset += byte_len;
    }
    let header = Header {
        dtype: T::DTYPE.name().to_string(),
        arch: params.arch.clone(),
        tensors: entries,
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| AbaError::Checkpoint(format!("header encode: {}", e)))?;

    let mut f = File::create(path)?;
    f.write_all(MAGIC)?;
    f.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    f.write_all(&header_bytes)?;
    for (_, t) in &named {
        let mut buf = Vec::with_capacity(t.numel() * width);
        for v in t.data() {
            match T::DTYPE {
                Dtype::F32 => buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes()),
                Dtype::F64 => buf.extend_from_slice(&v.as_f64().to_le_bytes()),
            }
        }
        f.write_all(&buf)?;
    }
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<ClassifierParams<T>> {
    let mut f = File::open(path)?;
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic)
        .map_err(|_| AbaError::Checkpoint("truncated checkpoint".into()))?;
    if &magic != MAGIC {
        return Err(AbaError::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(MAGIC)
        )));
    }
    let mut len_bytes = [0u8; 4];
    f.read_exact(&mut len_bytes)
        .map_err(|_| AbaError::Checkpoint("truncated header length".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    f.read_exact(&mut header_bytes)
        .map_err(|_| AbaError::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| AbaError::Checkpoint(format!("header decode: {}", e)))?;
    if header.dtype != T::DTYPE.name() {
        return Err(AbaError::Checkpoint(format!(
            "dtype mismatch: checkpoint is {}, requested {}",
            header.dtype,
            T::DTYPE.name()
        )));
    }
    let mut payload = Vec::new();
    f.read_to_end(&mut payload)?;

    let width = scalar_width(T::DTYPE);
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let start = e.offset as usize;
        let end = start + e.byte_len as usize;
        if end > payload.len() {
            return Err(AbaError::Checkpoint(format!(
                "tensor {} extends past payload",
                e.name
            )));
        }
        let n: usize = e.shape.iter().product();
        if n * width != e.byte_len as usize {
            return Err(AbaError::Checkpoint(format!(
                "tensor {} byte length does not match shape",
                e.name
            )));
        }
        let mut data = Vec::with_capacity(n);
        for chunk in payload[start..end].chunks_exact(width) {
            let v = match T::DTYPE {
                Dtype::F32 => f32::from_le_bytes(chunk.try_into().unwrap()) as f64,
                Dtype::F64 => f64::from_le_bytes(chunk.try_into().unwrap()),
            };
            data.push(T::from_f64(v));
        }
        tensors.push(Tensor::from_vec(&e.shape, data)?);
    }

    let params = ClassifierParams {
        arch: header.arch,
        tensors,
    };
    // Names and shapes must match what the architecture expects.
    let expected = params.arch.param_plan()?;
    if expected.len() * 2 != params.tensors.len() {
        return Err(AbaError::Checkpoint("tensor count mismatch".into()));
    }
    for (i, p) in expected.iter().enumerate() {
        if params.tensors[2 * i].shape() != p.weight_shape.as_slice()
            || params.tensors[2 * i + 1].shape() != p.bias_shape.as_slice()
        {
            return Err(AbaError::Checkpoint(format!(
                "tensor shape mismatch at {}",
                p.name
            )));
        }
    }
    Ok(params)
}
