//! Index files.
//!
//! Little-endian layout: magic `XHNS`, version `u32`, the five params
//! (`u32` M, `u32` ef_construction, `u32` ef_search, `u64` seed, `u64` exact
//! threshold), 32-byte SHA-256 of the source `.vec` encoding, `u32` dim,
//! `u64` node count, node rows (`u64` each), `u32` entry node, `u32` max
//! level, then per node a `u8` level followed by `u32` length + `u32` ids for
//! each of its levels. A trailing SHA-256 covers everything before it.

use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::hnsw::{AnnIndex, HnswParams};
use crate::error::{Error, Result};
use crate::pool::{Pool, PoolView};

const MAGIC: &[u8; 4] = b"XHNS";
const VERSION: u32 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::BadIndex("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl AnnIndex {
    pub(crate) fn to_bytes(&self, source_checksum: &[u8; 32]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let p = &self.params;
        out.extend_from_slice(&(p.max_neighbors as u32).to_le_bytes());
        out.extend_from_slice(&(p.ef_construction as u32).to_le_bytes());
        out.extend_from_slice(&(p.ef_search as u32).to_le_bytes());
        out.extend_from_slice(&p.rng_seed.to_le_bytes());
        out.extend_from_slice(&(p.exact_threshold as u64).to_le_bytes());
        out.extend_from_slice(source_checksum);
        out.extend_from_slice(&(self.view.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.view.len() as u64).to_le_bytes());
        for &r in self.view.rows() {
            out.extend_from_slice(&(r as u64).to_le_bytes());
        }
        out.extend_from_slice(&self.entry.to_le_bytes());
        out.extend_from_slice(&(self.max_level as u32).to_le_bytes());
        for node in &self.links {
            out.push((node.len() - 1) as u8);
            for adj in node {
                out.extend_from_slice(&(adj.len() as u32).to_le_bytes());
                for &n in adj {
                    out.extend_from_slice(&n.to_le_bytes());
                }
            }
        }
        let digest: [u8; 32] = Sha256::digest(&out).into();
        out.extend_from_slice(&digest);
        out
    }

    /// The exact bytes [`save`](Self::save) would write.
    pub fn encode(&self) -> Vec<u8> {
        self.to_bytes(&self.view.pool().vectors().checksum())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, pool: Arc<Pool>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, pool)
    }

    /// Fails with `StaleIndex` if `pool`'s vectors are not the ones the
    /// index was built from.
    pub fn decode(bytes: &[u8], pool: Arc<Pool>) -> Result<Self> {
        if bytes.len() < 32 {
            return Err(Error::BadIndex("truncated".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 32);
        let digest: [u8; 32] = Sha256::digest(body).into();
        if digest[..] != tail[..] {
            return Err(Error::BadIndex("checksum mismatch (corrupt file)".into()));
        }
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::BadIndex("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::BadIndex(format!("unsupported version {version}")));
        }
        let params = HnswParams {
            max_neighbors: r.u32()? as usize,
            ef_construction: r.u32()? as usize,
            ef_search: r.u32()? as usize,
            rng_seed: r.u64()?,
            exact_threshold: r.u64()? as usize,
        };
        params.validate()?;
        let source: [u8; 32] = r.take(32)?.try_into().unwrap();
        if source != pool.vectors().checksum() {
            return Err(Error::StaleIndex(
                "vector file checksum differs from the one the index was built on".into(),
            ));
        }
        let dim = r.u32()? as usize;
        if dim != pool.dim() {
            return Err(Error::DimMismatch {
                expected: pool.dim(),
                got: dim,
            });
        }
        let n = r.u64()? as usize;
        if n == 0 || n > body.len() / 8 {
            return Err(Error::BadIndex(format!("implausible node count {n}")));
        }
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let row = r.u64()? as usize;
            if row >= pool.len() || rows.last().is_some_and(|&prev| prev >= row) {
                return Err(Error::BadIndex(format!("row {row} out of range or out of order")));
            }
            rows.push(row);
        }
        let entry = r.u32()?;
        let max_level = r.u32()? as usize;
        if entry as usize >= n {
            return Err(Error::BadIndex("entry node out of range".into()));
        }
        let mut links = Vec::with_capacity(n);
        for _ in 0..n {
            let level = r.u8()? as usize;
            if level > max_level {
                return Err(Error::BadIndex("node level above max level".into()));
            }
            let mut node = Vec::with_capacity(level + 1);
            for lc in 0..=level {
                let len = r.u32()? as usize;
                if len > params.max_links(lc) {
                    return Err(Error::BadIndex("adjacency list exceeds degree cap".into()));
                }
                let mut adj = Vec::with_capacity(len);
                for _ in 0..len {
                    let id = r.u32()?;
                    if id as usize >= n {
                        return Err(Error::BadIndex("neighbor id out of range".into()));
                    }
                    adj.push(id);
                }
                node.push(adj);
            }
            links.push(node);
        }
        if r.pos != body.len() {
            return Err(Error::BadIndex("trailing bytes".into()));
        }
        Ok(Self {
            params,
            view: PoolView::from_rows(pool, rows),
            links,
            entry,
            max_level,
        })
    }
}
