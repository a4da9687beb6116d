//! Parameter checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "ADGCKPT\0"
//! version  u32      FORMAT_VERSION
//! count    u32
//! count × entry:
//!   name_len u32, name (UTF-8)
//!   flags    u8     bit 0 = learnable
//!   width    u8     bytes per element (4 or 8)
//!   ndim     u32, dims u64 × ndim
//!   values   width × prod(dims) bytes, IEEE-754 little-endian
//! ```

use std::path::Path;

use thiserror::Error;

use super::params::ParamStore;
use super::real::{Precision, Real};

pub const MAGIC: &[u8; 8] = b"ADGCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint at byte {0}")]
    Truncated(usize),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint does not match model: {0}")]
    Mismatch(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub learnable: bool,
    pub precision: Precision,
    pub values: Vec<f64>,
}

pub fn encode<T: Real>(store: &ParamStore<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (_, p) in store.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(u8::from(p.learnable));
        out.push(T::PRECISION.byte_width() as u8);
        out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
        for &d in &p.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in &p.data {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated(self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<CheckpointEntry>, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| CheckpointError::Malformed(format!("entry name: {e}")))?
            .to_string();
        let flags = r.u8()?;
        let precision = match r.u8()? {
            4 => Precision::F32,
            8 => Precision::F64,
            w => return Err(CheckpointError::Malformed(format!("{name}: element width {w}"))),
        };
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim.min(8));
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| CheckpointError::Malformed(format!("{name}: shape overflow")))?;
        let width = precision.byte_width();
        let raw = r.take(numel.checked_mul(width).ok_or(CheckpointError::Truncated(r.pos))?)?;
        let values = raw
            .chunks_exact(width)
            .map(|c| match precision {
                Precision::F32 => f32::read_le(c) as f64,
                Precision::F64 => f64::read_le(c),
            })
            .collect();
        entries.push(CheckpointEntry {
            name,
            shape,
            learnable: flags & 1 == 1,
            precision,
            values,
        });
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(entries)
}

/// Overwrites every parameter of `store` from `bytes`; names and shapes must match exactly.
pub fn load_into<T: Real>(store: &mut ParamStore<T>, bytes: &[u8]) -> Result<(), CheckpointError> {
    let entries = decode(bytes)?;
    if entries.len() != store.len() {
        return Err(CheckpointError::Mismatch(format!(
            "checkpoint has {} entries, model has {}",
            entries.len(),
            store.len()
        )));
    }
    for e in entries {
        let id = store
            .lookup(&e.name)
            .ok_or_else(|| CheckpointError::Mismatch(format!("unknown parameter {}", e.name)))?;
        let p = store.get_mut(id);
        if p.shape != e.shape {
            return Err(CheckpointError::Mismatch(format!(
                "{}: shape {:?} in checkpoint, {:?} in model",
                e.name, e.shape, p.shape
            )));
        }
        p.data = e.values.iter().map(|&v| T::of(v)).collect();
    }
    Ok(())
}

pub fn save<T: Real>(store: &ParamStore<T>, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(store)).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load<T: Real>(store: &mut ParamStore<T>, path: &Path) -> Result<(), CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_into(store, &bytes)
}
