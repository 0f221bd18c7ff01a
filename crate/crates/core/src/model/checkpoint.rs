//! Binary checkpoint container. All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "CCKP"
//! version      u32      1
//! meta_len     u32      then meta_len bytes of UTF-8 JSON (config echo)
//! vocab_len    u32      then vocab_len bytes of UTF-8 (vocabulary symbols)
//! step         u64
//! blocks       u32      number of named blocks, each:
//!   name_len   u32      then name_len bytes of UTF-8
//!   ndim       u32      then ndim × u64 dimensions
//!   values     f64 × product(dims)
//! ```
//!
//! Writes go to a temporary sibling that is renamed into place.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::numerics::Array;

use super::ModelError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// JSON echo of the configuration that produced the blocks.
    pub meta: String,
    pub vocabulary: String,
    pub step: u64,
    pub blocks: Vec<(String, Array)>,
}

fn put_bytes(buf: &mut Vec<u8>, b: &[u8]) {
    buf.extend_from_slice(&(b.len() as u32).to_le_bytes());
    buf.extend_from_slice(b);
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| ModelError::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| ModelError::Format(e.to_string()))
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_bytes(&mut buf, self.meta.as_bytes());
        put_bytes(&mut buf, self.vocabulary.as_bytes());
        buf.extend_from_slice(&self.step.to_le_bytes());
        buf.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for (name, arr) in &self.blocks {
            put_bytes(&mut buf, name.as_bytes());
            buf.extend_from_slice(&(arr.shape().len() as u32).to_le_bytes());
            for &d in arr.shape() {
                buf.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in arr.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(ModelError::Format("bad checkpoint magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Format(format!("unsupported checkpoint version {version}")));
        }
        let meta = r.string()?;
        let vocabulary = r.string()?;
        let step = r.u64()?;
        let count = r.u32()? as usize;
        let mut blocks = Vec::with_capacity(count);
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| ModelError::Format("block too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            blocks.push((name, Array::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Self {
            meta,
            vocabulary,
            step,
            blocks,
        })
    }

    /// Blocks whose name starts with `prefix`, with the prefix removed.
    pub fn blocks_with_prefix(&self, prefix: &str) -> Vec<(String, Array)> {
        self.blocks
            .iter()
            .filter_map(|(n, a)| n.strip_prefix(prefix).map(|s| (s.to_string(), a.clone())))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
        tmp_name.push(".tmp");
        let tmp = path.with_file_name(tmp_name);
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
