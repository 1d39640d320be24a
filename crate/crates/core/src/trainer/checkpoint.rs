//! `SSPQ` checkpoint files.
//!
//! ```text
//! b"SSPQ" | header_len: u32 LE | header: JSON (header_len bytes) | params: f64 LE
//! ```
//!
//! The header records the architecture and, optionally, the training config.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::encoder::{Activation, QueryEncoder};
use super::train::TrainConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSPQ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub param_count: usize,
    pub config: Option<TrainConfig>,
}

pub fn encode_checkpoint(enc: &QueryEncoder, config: Option<&TrainConfig>) -> Result<Vec<u8>> {
    let header = CheckpointHeader {
        sizes: enc.sizes().to_vec(),
        activation: enc.activation(),
        param_count: enc.param_count(),
        config: config.cloned(),
    };
    let json = serde_json::to_vec(&header)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::Format("header too large".into()))?;
    let mut out = Vec::with_capacity(8 + json.len() + enc.param_count() * 8);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for p in enc.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(QueryEncoder, CheckpointHeader)> {
    let fmt = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(fmt("not an SSPQ checkpoint"));
    }
    let len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(8..8 + len).ok_or_else(|| fmt("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(body).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let payload = &bytes[8 + len..];
    if payload.len() != header.param_count * 8 {
        return Err(fmt("parameter payload does not match header"));
    }
    let params = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let enc = QueryEncoder::from_params(header.sizes.clone(), header.activation, params)
        .map_err(|e| Error::Format(e.to_string()))?;
    Ok((enc, header))
}

pub fn save_checkpoint(path: impl AsRef<Path>, enc: &QueryEncoder, config: Option<&TrainConfig>) -> Result<()> {
    fs::write(path, encode_checkpoint(enc, config)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(QueryEncoder, CheckpointHeader)> {
    decode_checkpoint(&fs::read(path)?)
}
