//! Context-sensitive chunking: split into non-overlapping cores, pad each
//! with real past and future frames, encode independently, drop the
//! emissions that belong to the padding and merge what is left.

mod stream;

pub use stream::{StreamChunk, StreamSession};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::{CtcError, EmissionLattice};
use crate::data::{DataError, FeatureSequence};
use crate::model::{BoundParams, EncoderState, ModelError};
use crate::numerics::{Graph, NodeId, NumericsError};

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("invalid chunk plan: {0}")]
    InvalidPlan(String),
    #[error("input has no frames")]
    Empty,
    #[error("stream already flushed")]
    Finished,
    #[error("internal: {0}")]
    Internal(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Chunk geometry in input frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub chunk_frames: usize,
    pub left_frames: usize,
    pub right_frames: usize,
    pub subsample_factor: usize,
}

fn ms_to_frames(ms: f64, hop_ms: f64, what: &str) -> Result<usize, ChunkError> {
    let f = ms / hop_ms;
    if !(f >= 0.0) || (f - f.round()).abs() > 1e-9 {
        return Err(ChunkError::InvalidPlan(format!(
            "{what} of {ms} ms is not a whole number of {hop_ms} ms frames"
        )));
    }
    Ok(f.round() as usize)
}

impl ChunkPlan {
    pub fn new(chunk_frames: usize, left_frames: usize, right_frames: usize, subsample_factor: usize) -> Result<Self, ChunkError> {
        let plan = Self {
            chunk_frames,
            left_frames,
            right_frames,
            subsample_factor,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn from_ms(chunk_ms: f64, left_ms: f64, right_ms: f64, hop_ms: f64, subsample_factor: usize) -> Result<Self, ChunkError> {
        Self::new(
            ms_to_frames(chunk_ms, hop_ms, "chunk")?,
            ms_to_frames(left_ms, hop_ms, "left context")?,
            ms_to_frames(right_ms, hop_ms, "right context")?,
            subsample_factor,
        )
    }

    pub fn validate(&self) -> Result<(), ChunkError> {
        let s = self.subsample_factor;
        if s == 0 {
            return Err(ChunkError::InvalidPlan("subsample factor must be at least 1".into()));
        }
        if self.chunk_frames < s {
            return Err(ChunkError::InvalidPlan(format!(
                "chunk of {} frames is shorter than the subsample factor {s}",
                self.chunk_frames
            )));
        }
        for (name, v) in [
            ("chunk", self.chunk_frames),
            ("left", self.left_frames),
            ("right", self.right_frames),
        ] {
            if v % s != 0 {
                return Err(ChunkError::InvalidPlan(format!(
                    "{name} length {v} is not a multiple of the subsample factor {s}"
                )));
            }
        }
        Ok(())
    }

    /// Worst-case delay before a frame's emission is available: a full
    /// chunk plus its lookahead.
    pub fn lookahead_ms(&self, hop_ms: f64) -> f64 {
        (self.chunk_frames + self.right_frames) as f64 * hop_ms
    }

    /// Plan whose single chunk covers any sequence up to `frames`.
    pub fn whole(frames: usize, subsample_factor: usize) -> Self {
        Self {
            chunk_frames: frames.max(1).next_multiple_of(subsample_factor),
            left_frames: 0,
            right_frames: 0,
            subsample_factor,
        }
    }
}

/// One chunk: its core interval, the padded interval actually encoded and
/// the number of emission frames to drop at each end.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChunkSlice {
    pub core: (usize, usize),
    pub padded: (usize, usize),
    pub trim: (usize, usize),
}

impl ChunkSlice {
    pub fn of(start: usize, end: usize, total: usize, plan: &ChunkPlan) -> Self {
        let s = plan.subsample_factor;
        let pstart = start.saturating_sub(plan.left_frames);
        let pend = (end + plan.right_frames).min(total);
        // the tail context can be ragged when clipped at a length that is
        // not a multiple of s; its partial emission frame is padding too
        Self {
            core: (start, end),
            padded: (pstart, pend),
            trim: ((start - pstart) / s, (pend - end).div_ceil(s)),
        }
    }
}

pub fn plan_chunks(total_frames: usize, plan: &ChunkPlan) -> Result<Vec<ChunkSlice>, ChunkError> {
    plan.validate()?;
    if total_frames == 0 {
        return Err(ChunkError::Empty);
    }
    Ok((0..total_frames)
        .step_by(plan.chunk_frames)
        .map(|start| ChunkSlice::of(start, (start + plan.chunk_frames).min(total_frames), total_frames, plan))
        .collect())
}

fn check_factor(plan: &ChunkPlan, encoder: &EncoderState) -> Result<(), ChunkError> {
    if plan.subsample_factor != encoder.config().subsample_factor {
        return Err(ChunkError::InvalidPlan(format!(
            "plan assumes subsample factor {}, encoder has {}",
            plan.subsample_factor,
            encoder.config().subsample_factor
        )));
    }
    Ok(())
}

fn trim_bounds(slice: &ChunkSlice, emitted: usize) -> Result<(usize, usize), ChunkError> {
    let (lead, tail) = slice.trim;
    if lead + tail >= emitted {
        return Err(ChunkError::Internal(format!(
            "trim {lead}+{tail} leaves nothing of {emitted} emission frames for core {:?}",
            slice.core
        )));
    }
    Ok((lead, emitted - tail))
}

/// Encodes one padded chunk and keeps its core emissions.
pub fn encode_slice(features: &FeatureSequence, slice: &ChunkSlice, encoder: &EncoderState) -> Result<EmissionLattice, ChunkError> {
    let padded = features.slice(slice.padded.0, slice.padded.1)?;
    let lattice = encoder.encode(&padded)?;
    let (a, b) = trim_bounds(slice, lattice.frames())?;
    Ok(lattice.slice(a, b)?)
}

pub fn chunked_encode(features: &FeatureSequence, plan: &ChunkPlan, encoder: &EncoderState) -> Result<EmissionLattice, ChunkError> {
    check_factor(plan, encoder)?;
    let parts = plan_chunks(features.frames(), plan)?
        .iter()
        .map(|s| encode_slice(features, s, encoder))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EmissionLattice::concat(&parts)?)
}

/// Chunk path on a training graph: merged, trimmed logits of every padded
/// chunk, sharing the parameters bound in `params`.
pub fn chunked_logits_node(
    g: &mut Graph,
    params: &BoundParams,
    encoder: &EncoderState,
    features: &FeatureSequence,
    plan: &ChunkPlan,
) -> Result<NodeId, ChunkError> {
    check_factor(plan, encoder)?;
    let mut parts = Vec::new();
    for slice in plan_chunks(features.frames(), plan)? {
        let padded = features.slice(slice.padded.0, slice.padded.1)?;
        let x = g.constant(padded.array().clone());
        let logits = encoder.logits_node(g, params, x)?;
        let (a, b) = trim_bounds(&slice, g.value(logits).rows())?;
        parts.push(g.slice_rows(logits, a, b)?);
    }
    Ok(if parts.len() == 1 { parts[0] } else { g.concat_rows(&parts)? })
}
