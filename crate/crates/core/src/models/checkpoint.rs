//! Flat binary checkpoints of named `f64` blocks.
//!
//! Per block: name length (u32 LE), UTF-8 name, rank (u32 LE), each
//! dimension (u32 LE), then the row-major payload as f64 LE.

use crate::autodiff::{ParamStore, Tensor};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint truncated at byte {offset}")]
    Truncated { offset: usize },
    #[error("checkpoint block name at byte {offset} is not UTF-8")]
    BadName { offset: usize },
    #[error("unsupported rank {rank} at byte {offset}")]
    BadRank { rank: u32, offset: usize },
}

pub fn encode(store: &ParamStore) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, block) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(block.value.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(block.value.cols() as u32).to_le_bytes());
        for v in block.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated { offset: self.bytes.len() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ParamStore, CheckpointError> {
    let mut store = ParamStore::new();
    let mut c = Cursor { bytes, pos: 0 };
    while c.pos < bytes.len() {
        let len = c.u32()? as usize;
        let at = c.pos;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| CheckpointError::BadName { offset: at })?
            .to_string();
        let at = c.pos;
        let rank = c.u32()?;
        let dims: Vec<usize> = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<_, _>>()?;
        let (rows, cols) = match dims[..] {
            [] => (1, 1),
            [n] => (1, n),
            [r, k] => (r, k),
            _ => return Err(CheckpointError::BadRank { rank, offset: at }),
        };
        let payload = c.take(rows * cols * 8)?;
        let data = payload
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        store.insert(name, Tensor::new(rows, cols, data));
    }
    Ok(store)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<(), CheckpointError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(store))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ParamStore, CheckpointError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut store = ParamStore::new();
        store.insert("a.w0", Tensor::new(2, 3, vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -7.5, 3.0]));
        store.insert("b", Tensor::scalar(std::f64::consts::PI));
        let back = decode(&encode(&store)).unwrap();
        for ((n1, b1), (n2, b2)) in store.iter().zip(back.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(b1.value.shape(), b2.value.shape());
            for (x, y) in b1.value.data().iter().zip(b2.value.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn truncation_is_reported() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(2, 2));
        let bytes = encode(&store);
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(CheckpointError::Truncated { .. })));
    }

}
