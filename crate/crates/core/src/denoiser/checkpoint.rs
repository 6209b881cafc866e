//! Checkpoint file: `MDLMCKPT` magic, a length-prefixed JSON header
//! (version, config, step, rng), a length-prefixed name table with shapes,
//! then each tensor as little-endian `f32`.

use std::fs;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::model::Denoiser;
use super::DenoiserConfig;
use crate::seed::{self, Rng};
use crate::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MDLMCKPT";
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserCheckpoint {
    pub model: Denoiser<f32>,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Training stream state, so a resumed run continues the same draws.
    pub rng: Option<Rng>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    config: DenoiserConfig,
    step: u64,
    rng: Option<Rng>,
}

/// Scaled-normal weights, unit norm gains, zero biases. Residual output
/// projections are scaled down by `1/sqrt(2 * layers)`.
pub fn init_params(config: &DenoiserConfig, seed: u64) -> Result<DenoiserCheckpoint> {
    config.validate()?;
    let layout = super::Layout::new(config);
    let mut params = vec![0f32; layout.size()];
    let mut rng = seed::rng(seed);
    let residual_std = INIT_STD / (2.0 * config.layers.max(1) as f64).sqrt();
    for t in layout.tensors() {
        let slot = &mut params[t.range.clone()];
        let name = t.name.as_str();
        if name.ends_with(".bias") {
            continue;
        }
        if name.contains("ln") || name.starts_with("final_norm") {
            slot.fill(1.0);
            continue;
        }
        let std = if name.ends_with("attn.out.weight") || name.ends_with("mlp.proj.weight") {
            residual_std
        } else {
            INIT_STD
        };
        let normal = Normal::new(0.0, std).expect("finite std");
        for p in slot.iter_mut() {
            *p = normal.sample(&mut rng) as f32;
        }
    }
    Ok(DenoiserCheckpoint {
        model: Denoiser::from_params(*config, params)?,
        step: 0,
        rng: None,
    })
}

impl DenoiserCheckpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            version: CHECKPOINT_VERSION,
            config: *self.model.config(),
            step: self.step,
            rng: self.rng.clone(),
        })?;
        let params = self.model.params();
        let mut out = Vec::with_capacity(64 + header.len() + params.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let tensors = self.model.layout().tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &dim in &t.shape {
                out.extend_from_slice(&(dim as u64).to_le_bytes());
            }
        }
        for t in tensors {
            for &p in &params[t.range.clone()] {
                out.extend_from_slice(&p.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                header.version
            )));
        }
        header.config.validate()?;
        let layout = super::Layout::new(&header.config);
        let count = r.u32()? as usize;
        if count != layout.tensors().len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, file has {count}",
                layout.tensors().len()
            )));
        }
        for t in layout.tensors() {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            if name != t.name || shape != t.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` {shape:?} does not match expected `{}` {:?}",
                    t.name, t.shape
                )));
            }
        }
        let mut params = Vec::with_capacity(layout.size());
        for chunk in r.take(layout.size() * 4)?.chunks_exact(4) {
            params.push(f32::from_le_bytes(chunk.try_into().expect("4-byte chunk")));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after tensor data",
                bytes.len() - r.pos
            )));
        }
        Ok(DenoiserCheckpoint {
            model: Denoiser::from_params(header.config, params)?,
            step: header.step,
            rng: header.rng,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("unexpected end of file (truncated checkpoint)".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint(ckpt: &DenoiserCheckpoint, path: &Path) -> Result<()> {
    fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<DenoiserCheckpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    DenoiserCheckpoint::from_bytes(&bytes)
}
