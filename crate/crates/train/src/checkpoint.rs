//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `AVFL` |
//! | 4 | format version, `u32` |
//! | 4 | length `c` of the config JSON, `u32` |
//! | c | [`ModelConfig`] as JSON |
//! | 4 | length `m` of the metadata JSON, `u32` |
//! | m | [`CheckpointMeta`] as JSON |
//! | 8 | parameter count `p`, `u64` |
//! | 8p | parameters, `f64` |
//! | 32 | SHA-256 of every preceding byte |

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Result, TrainError};
use crate::model::{ModelConfig, VectorFieldNet};

pub const MAGIC: &[u8; 4] = b"AVFL";
pub const FORMAT_VERSION: u32 = 1;

/// Free-form provenance stored next to the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// `stage1`, `reflow` or `distill`.
    pub stage: String,
    /// Which weights were written: `ema` or `raw`.
    pub weights: String,
    pub seed: u64,
    pub epochs: usize,
    /// Hex SHA-256 of the checkpoint this one was fine-tuned from.
    pub parent: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub net: VectorFieldNet,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let config = serde_json::to_vec(&self.net.config)
            .map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        let meta =
            serde_json::to_vec(&self.meta).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        let mut out = Vec::with_capacity(64 + config.len() + meta.len() + 8 * self.net.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(&config);
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.net.params.len() as u64).to_le_bytes());
        for p in &self.net.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| TrainError::Checkpoint(msg.to_string());
        if bytes.len() < 4 + 4 + 32 || &bytes[..4] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(TrainError::Checkpoint(format!(
                "format version {version}, this build reads version {FORMAT_VERSION}"
            )));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch (truncated or corrupt file)"));
        }
        let mut r = Reader { buf: body, at: 8 };
        let clen = r.u32()? as usize;
        let config: ModelConfig = serde_json::from_slice(r.take(clen)?)
            .map_err(|e| TrainError::Checkpoint(format!("config: {e}")))?;
        config.validate()?;
        let mlen = r.u32()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(mlen)?)
            .map_err(|e| TrainError::Checkpoint(format!("metadata: {e}")))?;
        let count = r.u64()? as usize;
        if count != config.param_count() {
            return Err(TrainError::Checkpoint(format!(
                "{count} parameters stored for a config that needs {}",
                config.param_count()
            )));
        }
        let raw = r.take(count.checked_mul(8).ok_or_else(|| bad("parameter count overflow"))?)?;
        if r.at != body.len() {
            return Err(bad("trailing bytes after parameters"));
        }
        let params = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Self {
            net: VectorFieldNet { config, params },
            meta,
        })
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn digest(&self) -> Result<String> {
        Ok(hex(&Sha256::digest(self.to_bytes()?)))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .at
            .checked_add(len)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| TrainError::Checkpoint("unexpected end of file".into()))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?).map_err(io_err(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    Checkpoint::from_bytes(&bytes)
}

/// Loads a checkpoint and requires its model config to equal `expected`.
pub fn load_checkpoint_expecting(path: &Path, expected: &ModelConfig) -> Result<Checkpoint> {
    let ckpt = load_checkpoint(path)?;
    if &ckpt.net.config != expected {
        return Err(TrainError::ConfigMismatch {
            found: format!("{:?}", ckpt.net.config),
            expected: format!("{expected:?}"),
        });
    }
    Ok(ckpt)
}
