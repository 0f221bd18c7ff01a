use crate::numerics::{log_softmax_rows, logsumexp, Array};

use super::CtcError;

/// Index of the blank class in every lattice row.
pub const BLANK: usize = 0;

const NORM_TOL: f64 = 1e-6;

/// Per-frame log-distributions over `vocab_size + 1` classes, blank first.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionLattice {
    frames: usize,
    vocab_size: usize,
    log_probs: Vec<f64>,
}

impl EmissionLattice {
    /// Wraps already-normalized log-probabilities.
    pub fn new(frames: usize, vocab_size: usize, log_probs: Vec<f64>) -> Result<Self, CtcError> {
        let classes = vocab_size + 1;
        if frames == 0 {
            return Err(CtcError::EmptyLattice);
        }
        if log_probs.len() != frames * classes {
            return Err(CtcError::Shape(format!(
                "{} values for {frames} frames of {classes} classes",
                log_probs.len()
            )));
        }
        for (t, row) in log_probs.chunks_exact(classes).enumerate() {
            let lse = logsumexp(row);
            if !(lse.abs() <= NORM_TOL) || row.iter().any(|v| v.is_nan()) {
                return Err(CtcError::NotNormalized { frame: t, logsumexp: lse });
            }
        }
        Ok(Self {
            frames,
            vocab_size,
            log_probs,
        })
    }

    /// Applies a row-wise log-softmax to raw scores.
    pub fn from_logits(frames: usize, vocab_size: usize, logits: &[f64]) -> Result<Self, CtcError> {
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(CtcError::Shape("non-finite logits".into()));
        }
        if logits.len() != frames * (vocab_size + 1) {
            return Err(CtcError::Shape(format!(
                "{} logits for {frames} frames of {} classes",
                logits.len(),
                vocab_size + 1
            )));
        }
        Self::new(frames, vocab_size, log_softmax_rows(logits, vocab_size + 1))
    }

    /// Builds a lattice from per-frame probabilities (tests and fixtures).
    pub fn from_probs(rows: &[Vec<f64>]) -> Result<Self, CtcError> {
        let classes = rows.first().map(Vec::len).ok_or(CtcError::EmptyLattice)?;
        if classes < 2 {
            return Err(CtcError::Shape("need blank plus at least one label".into()));
        }
        let mut lp = Vec::with_capacity(rows.len() * classes);
        for r in rows {
            if r.len() != classes {
                return Err(CtcError::Shape("ragged probability rows".into()));
            }
            lp.extend(r.iter().map(|p| p.ln()));
        }
        Self::new(rows.len(), classes - 1, lp)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn classes(&self) -> usize {
        self.vocab_size + 1
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let c = self.classes();
        &self.log_probs[t * c..(t + 1) * c]
    }

    pub fn to_array(&self) -> Array {
        Array::from_rows(self.frames, self.classes(), self.log_probs.clone()).expect("consistent")
    }

    /// Frames `[start, end)` as a new lattice.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self, CtcError> {
        if start >= end || end > self.frames {
            return Err(CtcError::Shape(format!(
                "frame range {start}..{end} invalid for {} frames",
                self.frames
            )));
        }
        let c = self.classes();
        Ok(Self {
            frames: end - start,
            vocab_size: self.vocab_size,
            log_probs: self.log_probs[start * c..end * c].to_vec(),
        })
    }

    /// Concatenates lattices in time.
    pub fn concat(parts: &[EmissionLattice]) -> Result<Self, CtcError> {
        let first = parts.first().ok_or(CtcError::EmptyLattice)?;
        let mut log_probs = Vec::new();
        let mut frames = 0;
        for p in parts {
            if p.vocab_size != first.vocab_size {
                return Err(CtcError::Shape("vocabulary sizes differ".into()));
            }
            frames += p.frames;
            log_probs.extend_from_slice(&p.log_probs);
        }
        Ok(Self {
            frames,
            vocab_size: first.vocab_size,
            log_probs,
        })
    }
}
