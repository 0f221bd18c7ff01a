//! Feature matrices and their on-disk container.
//!
//! Layout (little-endian):
//!
//! | offset | size | field                      |
//! |--------|------|----------------------------|
//! | 0      | 4    | magic `b"CCFT"`            |
//! | 4      | 4    | version `u32` (= 1)        |
//! | 8      | 4    | frames `T` `u32`           |
//! | 12     | 4    | feature dim `F` `u32`      |
//! | 16     | 4    | hop in ms `f32`            |
//! | 20     | 4·T·F | row-major `f32` values    |

use std::io::{Read, Write};
use std::path::Path;

use crate::numerics::Array;

use super::DataError;

pub const FEATURE_MAGIC: &[u8; 4] = b"CCFT";
pub const FEATURE_VERSION: u32 = 1;
pub const DEFAULT_HOP_MS: f64 = 10.0;

/// `[T × F]` acoustic features plus the frame hop.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    values: Array,
    hop_ms: f64,
}

impl FeatureSequence {
    pub fn new(frames: usize, dim: usize, data: Vec<f64>, hop_ms: f64) -> Result<Self, DataError> {
        let values = Array::from_rows(frames, dim, data).map_err(|e| DataError::Format(e.to_string()))?;
        Ok(Self { values, hop_ms })
    }

    pub fn from_array(values: Array, hop_ms: f64) -> Result<Self, DataError> {
        if values.shape().len() != 2 {
            return Err(DataError::Format(format!("features must be 2-D, got {:?}", values.shape())));
        }
        Ok(Self { values, hop_ms })
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn hop_ms(&self) -> f64 {
        self.hop_ms
    }

    pub fn array(&self) -> &Array {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        self.values.row(t)
    }

    /// Frames `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self, DataError> {
        let values = self
            .values
            .slice_rows(start, end)
            .map_err(|e| DataError::Format(e.to_string()))?;
        Ok(Self {
            values,
            hop_ms: self.hop_ms,
        })
    }

    /// Stacks sequences along time.
    pub fn concat(parts: &[&FeatureSequence]) -> Result<Self, DataError> {
        let first = parts.first().ok_or_else(|| DataError::Format("nothing to concatenate".into()))?;
        let dim = first.dim();
        let mut data = Vec::new();
        let mut frames = 0;
        for p in parts {
            if p.dim() != dim {
                return Err(DataError::Format(format!("feature dims {} and {dim} differ", p.dim())));
            }
            frames += p.frames();
            data.extend_from_slice(p.values.data());
        }
        Self::new(frames, dim, data, first.hop_ms)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), DataError> {
        let mut buf = Vec::with_capacity(20 + 4 * self.values.len());
        buf.extend_from_slice(FEATURE_MAGIC);
        buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.frames() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.hop_ms as f32).to_le_bytes());
        for &v in self.values.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, DataError> {
        let mut header = [0u8; 20];
        r.read_exact(&mut header)?;
        if &header[0..4] != FEATURE_MAGIC {
            return Err(DataError::Format("bad feature file magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != FEATURE_VERSION {
            return Err(DataError::Format(format!("unsupported feature file version {version}")));
        }
        let frames = word(8) as usize;
        let dim = word(12) as usize;
        let hop_ms = f32::from_le_bytes(header[16..20].try_into().expect("4 bytes")) as f64;
        let mut body = vec![0u8; 4 * frames * dim];
        r.read_exact(&mut body)?;
        let data = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        Self::new(frames, dim, data, hop_ms)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let f = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn file_round_trip_is_bit_exact(frames in 1usize..20, dim in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..frames * dim).map(|_| (rng.gen::<f32>() * 10.0 - 5.0) as f64).collect();
            let f = FeatureSequence::new(frames, dim, data, 10.0).unwrap();
            let mut buf = Vec::new();
            f.write_to(&mut buf).unwrap();
            let back = FeatureSequence::read_from(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &f);
            let mut again = Vec::new();
            back.write_to(&mut again).unwrap();
            prop_assert_eq!(again, buf);
        }
    }

    #[test]
    fn rejects_bad_magic() {
        let buf = b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00\x01\x00\x00\x00\x00\x00\x20\x41\x00\x00\x00\x00";
        assert!(FeatureSequence::read_from(&buf[..]).is_err());
    }
}
