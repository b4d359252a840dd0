//! Checkpoint file format.
//!
//! ```text
//! "ACLB"            4 bytes
//! version           u16 little-endian
//! header length     u32 little-endian
//! header            UTF-8 JSON: config, train_meta, parameter manifest
//! parameter blocks  little-endian f64, in manifest order
//! ```
//!
//! Manifest offsets are byte offsets from the start of the parameter blocks.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Checkpoint, ModelConfig, NamedParam, TrainMeta};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ACLB";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    train_meta: TrainMeta,
    params: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let params = self
            .params()
            .iter()
            .map(|p| {
                let len = p.value.numel() * 8;
                let entry = ManifestEntry {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    offset,
                    len,
                };
                offset += len;
                entry
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            config: self.config().clone(),
            train_meta: self.train_meta.clone(),
            params,
        })?;
        let header_len = u32::try_from(header.len()).map_err(|_| Error::Checkpoint("header too large".into()))?;
        let mut out = Vec::with_capacity(10 + header.len() + offset);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&header_len.to_le_bytes());
        out.extend_from_slice(&header);
        for p in self.params() {
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 10 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("missing ACLB magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let header_len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
        let body = 10 + header_len;
        let header: Header = serde_json::from_slice(bytes.get(10..body).ok_or_else(|| bad("truncated header"))?)?;
        let blocks = &bytes[body..];
        let mut params = Vec::with_capacity(header.params.len());
        for entry in header.params {
            let raw = blocks
                .get(entry.offset..entry.offset + entry.len)
                .ok_or_else(|| Error::Checkpoint(format!("parameter {} truncated", entry.name)))?;
            if entry.len != entry.shape.iter().product::<usize>() * 8 {
                return Err(Error::Checkpoint(format!("parameter {} length disagrees with shape", entry.name)));
            }
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            params.push(NamedParam {
                name: entry.name,
                value: Tensor::new(entry.shape, data)?,
            });
        }
        Checkpoint::from_parts(header.config, params, header.train_meta)
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    Checkpoint::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
