//! `SSWT` parameter checkpoints.
//!
//! Layout (all integers u32 little-endian, floats f64 little-endian):
//!
//! ```text
//! "SSWT" | tensor count | per tensor: rank | dims... | values...
//! ```

use std::path::Path;

use crate::dataio::atomic_write;
use crate::error::{Error, Result};

use super::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SSWT";

pub fn encode_checkpoint(params: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for t in params {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<Vec<Tensor>> {
    let mut pos = 0usize;
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or_else(|| {
            Error::format(path, format!("truncated at byte {pos}: need {n} bytes for {what}, file has {}", bytes.len()))
        })?;
        let s = &bytes[pos..end];
        pos = end;
        Ok(s)
    };
    if take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format(path, "bad magic at byte 0, expected \"SSWT\""));
    }
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize;
    let count = u32_at(take(4, "tensor count")?);
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = u32_at(take(4, "rank")?);
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(u32_at(take(4, "dimension")?));
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| {
            Error::format(path, format!("tensor shape {shape:?} overflows"))
        })?;
        let raw = take(n.checked_mul(8).unwrap_or(usize::MAX), "tensor values")?;
        let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        tensors.push(Tensor::new(shape, values)?);
    }
    if pos != bytes.len() {
        return Err(Error::format(path, format!("{} trailing bytes after byte {pos}", bytes.len() - pos)));
    }
    Ok(tensors)
}

pub fn save_checkpoint(path: &Path, params: &[Tensor]) -> Result<()> {
    atomic_write(path, &encode_checkpoint(params))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
