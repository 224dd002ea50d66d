//! Binary sentence-feature files:
//! `"TRIDETXT"`, u32 paragraph count (5), 5 × u32 sentence counts, u32 dim,
//! then every vector as little-endian f32, paragraph-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::description::SceneDescription;
use crate::text::embed::embed_sentence;

pub const MAGIC: &[u8; 8] = b"TRIDETXT";

/// Per-paragraph sentence vectors: general, then L, ML, MR, R.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceFeatures {
    pub dim: usize,
    pub paragraphs: [Vec<Vec<f32>>; 5],
}

impl SentenceFeatures {
    pub fn from_description(desc: &SceneDescription, dim: usize) -> Self {
        let mut paragraphs: [Vec<Vec<f32>>; 5] = Default::default();
        for (slot, para) in paragraphs.iter_mut().zip(desc.paragraphs()) {
            *slot = para.iter().map(|s| embed_sentence(s, dim)).collect();
        }
        SentenceFeatures { dim, paragraphs }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&5u32.to_le_bytes());
        for p in &self.paragraphs {
            out.extend_from_slice(&(p.len() as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in self.paragraphs.iter().flatten() {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(Error::format(0, "bad magic, expected TRIDETXT"));
        }
        let count_at = r.pos as u64;
        let n = r.u32()?;
        if n != 5 {
            return Err(Error::format(count_at, format!("paragraph count must be 5, got {n}")));
        }
        let mut counts = [0usize; 5];
        for c in counts.iter_mut() {
            *c = r.u32()? as usize;
        }
        let dim_at = r.pos as u64;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::format(dim_at, "dimension must be positive"));
        }
        let mut paragraphs: [Vec<Vec<f32>>; 5] = Default::default();
        for (p, &c) in paragraphs.iter_mut().zip(&counts) {
            for _ in 0..c {
                let raw = r.take(4 * dim).map_err(|_| {
                    Error::format(
                        r.pos as u64,
                        format!("vector count mismatch: header promises {} vectors", counts.iter().sum::<usize>()),
                    )
                })?;
                p.push(raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect());
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::format(
                r.pos as u64,
                format!("vector count mismatch: {} trailing bytes", bytes.len() - r.pos),
            ));
        }
        Ok(SentenceFeatures { dim, paragraphs })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.bytes.len() as u64,
                format!("truncated: needed {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}
