//! Versioned binary tensor container.
//!
//! Layout: magic `ADPW`, `u32` format version, `u32` header length, UTF-8
//! JSON header, then each tensor's values as little-endian `f64` in header
//! order. The header lists `{name, shape}` per tensor under `"tensors"`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ADPW";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: &str, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            shape,
            data,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

pub fn encode_container(header: &serde_json::Value, tensors: &[Tensor]) -> Result<Vec<u8>> {
    let mut h = header.clone();
    let obj = h
        .as_object_mut()
        .ok_or_else(|| Error::InvalidConfig("container header must be a JSON object".into()))?;
    let infos: Vec<TensorInfo> = tensors
        .iter()
        .map(|t| {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::LengthMismatch {
                    expected: t.shape.iter().product(),
                    got: t.data.len(),
                });
            }
            Ok(TensorInfo {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
        })
        .collect::<Result<_>>()?;
    obj.insert("tensors".into(), serde_json::to_value(infos).expect("plain data"));
    let json = serde_json::to_vec(&h).expect("plain data");
    let mut out = Vec::with_capacity(12 + json.len() + 8 * tensors.iter().map(|t| t.data.len()).sum::<usize>());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_container(bytes: &[u8], path: &Path) -> Result<(serde_json::Value, Vec<Tensor>)> {
    let fail = |msg: &str| Error::format(path, msg);
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(fail("missing ADPW magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported format version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| fail("truncated header"))?;
    let header: serde_json::Value = serde_json::from_slice(body).map_err(|e| Error::format(path, format!("bad header JSON: {e}")))?;
    let infos: Vec<TensorInfo> = serde_json::from_value(header.get("tensors").cloned().ok_or_else(|| fail("header lists no tensors"))?)
        .map_err(|e| Error::format(path, format!("bad tensor table: {e}")))?;
    let mut pos = 12 + hlen;
    let mut tensors = Vec::with_capacity(infos.len());
    for info in infos {
        let n: usize = info.shape.iter().product();
        let end = pos + 8 * n;
        let raw = bytes.get(pos..end).ok_or_else(|| Error::format(path, format!("tensor {} is truncated", info.name)))?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(Tensor {
            name: info.name,
            shape: info.shape,
            data,
        });
        pos = end;
    }
    if pos != bytes.len() {
        return Err(fail("trailing bytes after last tensor"));
    }
    Ok((header, tensors))
}

pub fn write_container(path: &Path, header: &serde_json::Value, tensors: &[Tensor]) -> Result<()> {
    let bytes = encode_container(header, tensors)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<(serde_json::Value, Vec<Tensor>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_container(&bytes, path)
}
