use crate::ctc::{DecodeResult, EmissionLattice, PrefixBeamSearch};
use crate::data::FeatureSequence;
use crate::model::EncoderState;

use super::{check_factor, encode_slice, ChunkError, ChunkPlan, ChunkSlice};

/// What one chunk contributed to the stream.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamChunk {
    pub chunk_index: usize,
    pub slice: ChunkSlice,
    /// Core emissions of this chunk.
    pub lattice: EmissionLattice,
    /// Tokens of the current best hypothesis first emitted inside this chunk.
    pub emitted_tokens: usize,
    pub core_ms: f64,
    pub lookahead_ms: f64,
}

/// Incremental chunked decoding. A chunk is encoded as soon as its core and
/// its right context are buffered; `flush` handles the tail.
pub struct StreamSession<'a> {
    plan: ChunkPlan,
    encoder: &'a EncoderState,
    decoder: PrefixBeamSearch,
    buffer: Vec<f64>,
    frames: usize,
    next_start: usize,
    chunk_index: usize,
    hop_ms: Option<f64>,
    finished: bool,
}

impl<'a> StreamSession<'a> {
    pub fn new(plan: ChunkPlan, encoder: &'a EncoderState, beam: usize) -> Result<Self, ChunkError> {
        plan.validate()?;
        check_factor(&plan, encoder)?;
        Ok(Self {
            plan,
            encoder,
            decoder: PrefixBeamSearch::new(beam, encoder.config().vocab_size)?,
            buffer: Vec::new(),
            frames: 0,
            next_start: 0,
            chunk_index: 0,
            hop_ms: None,
            finished: false,
        })
    }

    pub fn frames_buffered(&self) -> usize {
        self.frames
    }

    /// Appends frames and returns the chunks that became ready.
    pub fn push(&mut self, features: &FeatureSequence) -> Result<Vec<StreamChunk>, ChunkError> {
        if self.finished {
            return Err(ChunkError::Finished);
        }
        let dim = self.encoder.config().feature_dim;
        if features.dim() != dim {
            return Err(ChunkError::Model(crate::model::ModelError::FeatureDim {
                expected: dim,
                got: features.dim(),
            }));
        }
        self.hop_ms.get_or_insert(features.hop_ms());
        self.buffer.extend_from_slice(features.array().data());
        self.frames += features.frames();

        let mut out = Vec::new();
        while self.next_start + self.plan.chunk_frames + self.plan.right_frames <= self.frames {
            let end = self.next_start + self.plan.chunk_frames;
            // the session does not know the final length yet, so context is
            // clipped only by what has been buffered
            let slice = ChunkSlice::of(self.next_start, end, end + self.plan.right_frames, &self.plan);
            out.push(self.emit(slice)?);
        }
        Ok(out)
    }

    /// Encodes whatever remains and closes the session.
    pub fn flush(&mut self) -> Result<Vec<StreamChunk>, ChunkError> {
        if self.finished {
            return Err(ChunkError::Finished);
        }
        self.finished = true;
        let mut out = Vec::new();
        while self.next_start < self.frames {
            let end = (self.next_start + self.plan.chunk_frames).min(self.frames);
            let slice = ChunkSlice::of(self.next_start, end, self.frames, &self.plan);
            out.push(self.emit(slice)?);
        }
        Ok(out)
    }

    fn emit(&mut self, slice: ChunkSlice) -> Result<StreamChunk, ChunkError> {
        let dim = self.encoder.config().feature_dim;
        let hop = self.hop_ms.unwrap_or(crate::data::DEFAULT_HOP_MS);
        let (ps, pe) = slice.padded;
        let padded = FeatureSequence::new(pe - ps, dim, self.buffer[ps * dim..pe * dim].to_vec(), hop)?;
        let local = ChunkSlice {
            core: (slice.core.0 - ps, slice.core.1 - ps),
            padded: (0, pe - ps),
            trim: slice.trim,
        };
        let lattice = encode_slice(&padded, &local, self.encoder)?;
        let first_frame = self.decoder.frames_seen();
        self.decoder.push_lattice(&lattice)?;
        let emitted_tokens = self
            .decoder
            .best()
            .frame_offsets
            .iter()
            .filter(|&&t| t >= first_frame)
            .count();
        let chunk = StreamChunk {
            chunk_index: self.chunk_index,
            slice,
            lattice,
            emitted_tokens,
            core_ms: (slice.core.1 - slice.core.0) as f64 * hop,
            lookahead_ms: self.plan.lookahead_ms(hop),
        };
        self.chunk_index += 1;
        self.next_start = slice.core.1;
        Ok(chunk)
    }

    /// Best hypothesis over everything decoded so far.
    pub fn best(&self) -> DecodeResult {
        self.decoder.best()
    }
}
