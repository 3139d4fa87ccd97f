//! `OACT` tensor files: magic `b"OACT"`, format version (`u32`), rank
//! (`u32`), one `u64` per dimension, then the row-major payload as `f64`.
//! Every integer and float is little-endian.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"OACT";
pub const VERSION: u32 = 1;

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * t.rank() + 8 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Parses an in-memory `OACT` file; `path` is only used in errors.
pub fn decode_tensor(bytes: &[u8], path: &Path) -> Result<Tensor> {
    let bad = |message: &str| Error::TensorFormat {
        path: PathBuf::from(path),
        message: message.to_string(),
    };
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4) != Some(MAGIC.as_slice()) {
        return Err(bad("bad magic"));
    }
    match cur.u32() {
        Some(VERSION) => {}
        Some(v) => return Err(bad(&format!("unsupported version {v}"))),
        None => return Err(bad("truncated header")),
    }
    let rank = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let d = cur.u64().ok_or_else(|| bad("truncated shape"))?;
        shape.push(usize::try_from(d).map_err(|_| bad("dimension too large"))?);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("shape overflows"))?;
    let payload = count
        .checked_mul(8)
        .and_then(|n| cur.take(n))
        .ok_or_else(|| bad("truncated payload"))?;
    if cur.pos != bytes.len() {
        return Err(bad("trailing bytes after payload"));
    }
    let data = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Tensor::new(shape, data)
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    std::fs::write(path, encode_tensor(t))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    decode_tensor(&bytes, path)
}
