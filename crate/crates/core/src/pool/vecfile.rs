//! Binary vector files (`.vec`).
//!
//! Layout, all little-endian: magic `XVEC`, version `u32` (= 1), count `u64`,
//! dim `u32`, then `count × dim` `f32` values row-major. No padding, no footer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::VectorBlock;
use crate::error::{Error, Result};

pub const VEC_MAGIC: &[u8; 4] = b"XVEC";
pub const VEC_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

fn header(block: &VectorBlock) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(VEC_MAGIC);
    h[4..8].copy_from_slice(&VEC_VERSION.to_le_bytes());
    h[8..16].copy_from_slice(&(block.count() as u64).to_le_bytes());
    h[16..20].copy_from_slice(&(block.dim() as u32).to_le_bytes());
    h
}

pub(crate) fn checksum(block: &VectorBlock) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(header(block));
    for chunk in block.as_slice().chunks(4096) {
        let bytes: Vec<u8> = chunk.iter().flat_map(|x| x.to_le_bytes()).collect();
        hasher.update(&bytes);
    }
    hasher.finalize().into()
}

pub fn write_vectors(path: &Path, block: &VectorBlock) -> Result<()> {
    let io = |e| Error::io(path, e);
    let file = File::create(path).map_err(io)?;
    let mut w = BufWriter::new(file);
    w.write_all(&header(block)).map_err(io)?;
    for x in block.as_slice() {
        w.write_all(&x.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_vectors(path: &Path) -> Result<VectorBlock> {
    let io = |e| Error::io(path, e);
    let file = File::open(path).map_err(io)?;
    let file_len = file.metadata().map_err(io)?.len();
    let mut r = BufReader::new(file);

    let mut h = [0u8; HEADER_LEN];
    r.read_exact(&mut h)
        .map_err(|_| Error::BadHeader(format!("file is {file_len} bytes, shorter than the {HEADER_LEN}-byte header")))?;
    if &h[0..4] != VEC_MAGIC {
        return Err(Error::BadHeader(format!("bad magic {:?}", &h[0..4])));
    }
    let version = u32::from_le_bytes(h[4..8].try_into().unwrap());
    if version != VEC_VERSION {
        return Err(Error::BadHeader(format!("unsupported version {version}")));
    }
    let count = u64::from_le_bytes(h[8..16].try_into().unwrap());
    let dim = u32::from_le_bytes(h[16..20].try_into().unwrap()) as u64;
    if dim == 0 {
        return Err(Error::BadHeader("dim must be positive".into()));
    }
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::BadHeader(format!("count {count} × dim {dim} overflows")))?;
    let actual = file_len - HEADER_LEN as u64;
    if actual != expected {
        return Err(Error::BadHeader(format!(
            "payload is {actual} bytes but count {count} × dim {dim} needs {expected}"
        )));
    }

    let n = (count * dim) as usize;
    let mut data = Vec::with_capacity(n);
    let mut buf = vec![0u8; 1 << 16];
    let mut remaining = expected as usize;
    while remaining > 0 {
        let take = remaining.min(buf.len());
        r.read_exact(&mut buf[..take]).map_err(io)?;
        data.extend(buf[..take].chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())));
        remaining -= take;
    }
    VectorBlock::new(dim as usize, data)
}
