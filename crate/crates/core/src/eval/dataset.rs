//! Residual block datasets and their binary file format.
//!
//! ```text
//! magic      b"DTTP"
//! version    u16 = 1
//! n          u16
//! count      u32
//! labels     u16 number of labels, then per label: u8 length + UTF-8 bytes
//! modes      count x u16 label index
//! source     u8 length + UTF-8 bytes
//! samples    count * n² x i16, each block row-major
//! ```
//!
//! All integers are little-endian.

use std::path::Path;

use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"DTTP";
pub const DATASET_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidualDataset {
    pub n: usize,
    pub labels: Vec<String>,
    /// Label index of each block.
    pub modes: Vec<u16>,
    /// Row-major `n x n` blocks.
    pub blocks: Vec<Vec<i16>>,
    pub source: String,
}

impl ResidualDataset {
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > u16::MAX as usize {
            return Err(Error::InvalidSize(format!("block size {}", self.n)));
        }
        if self.blocks.is_empty() {
            return Err(Error::Empty("dataset has no blocks"));
        }
        if self.modes.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch { expected: self.blocks.len(), found: self.modes.len() });
        }
        if self.labels.is_empty() || self.labels.len() > u16::MAX as usize {
            return Err(Error::Format(format!("{} mode labels", self.labels.len())));
        }
        if let Some(l) = self.labels.iter().chain(std::iter::once(&self.source)).find(|l| l.len() > u8::MAX as usize) {
            return Err(Error::Format(format!("label too long: {l:?}")));
        }
        if let Some(b) = self.blocks.iter().find(|b| b.len() != self.n * self.n) {
            return Err(Error::DimensionMismatch { expected: self.n * self.n, found: b.len() });
        }
        if let Some(&m) = self.modes.iter().find(|&&m| m as usize >= self.labels.len()) {
            return Err(Error::IndexOutOfRange { index: m as usize, n: self.labels.len() });
        }
        Ok(())
    }

    /// Indices of the blocks labelled `mode`.
    pub fn indices_of(&self, mode: u16) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.modes[k] == mode).collect()
    }

    /// Blocks labelled `mode` as floats.
    pub fn float_blocks(&self, mode: u16) -> Vec<Vec<f64>> {
        self.indices_of(mode).into_iter().map(|k| self.blocks[k].iter().map(|&v| v as f64).collect()).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let count = u32::try_from(self.len()).map_err(|_| Error::Format("too many blocks".into()))?;
        let mut out = Vec::with_capacity(16 + self.len() * (2 + 2 * self.n * self.n));
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u16).to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        out.extend_from_slice(&(self.labels.len() as u16).to_le_bytes());
        for l in &self.labels {
            out.push(l.len() as u8);
            out.extend_from_slice(l.as_bytes());
        }
        for m in &self.modes {
            out.extend_from_slice(&m.to_le_bytes());
        }
        out.push(self.source.len() as u8);
        out.extend_from_slice(self.source.as_bytes());
        for b in &self.blocks {
            for v in b {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != DATASET_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.u16()?;
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let n = r.u16()? as usize;
        let count = r.u32()? as usize;
        let n_labels = r.u16()? as usize;
        let mut labels = Vec::with_capacity(n_labels);
        for _ in 0..n_labels {
            labels.push(r.string()?);
        }
        let mut modes = Vec::with_capacity(count.min(bytes.len()));
        for _ in 0..count {
            modes.push(r.u16()?);
        }
        let source = r.string()?;
        let need = count.checked_mul(n * n * 2).ok_or_else(|| Error::Format("size overflow".into()))?;
        let data = r.take(need)?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let blocks = data
            .chunks_exact(2 * n * n)
            .map(|c| c.chunks_exact(2).map(|p| i16::from_le_bytes([p[0], p[1]])).collect())
            .collect();
        let ds = Self { n, labels, modes, blocks, source };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(k).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("truncated: need {k} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.take(1)?[0] as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
}
