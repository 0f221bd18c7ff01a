//! Toy acoustic encoder: strided convolutional frontend, convolutional
//! positional encoding, pre-norm self-attention blocks and a linear
//! emission head over the vocabulary plus blank.

mod checkpoint;
mod encoder;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use encoder::{BoundParams, EncoderState};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ctc::CtcError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("encoder config: {0}")]
    Config(String),
    #[error("features have dimension {got}, encoder expects {expected}")]
    FeatureDim { expected: usize, got: usize },
    #[error("input has no frames")]
    Empty,
    #[error("checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub feature_dim: usize,
    pub layers: usize,
    pub hidden_dim: usize,
    pub heads: usize,
    /// Product of the frontend strides. Each factor of two is one stride-2
    /// convolution, so this must be a power of two.
    pub subsample_factor: usize,
    /// Output labels, excluding blank.
    pub vocab_size: usize,
    pub positional_kernel: usize,
    pub positional_groups: usize,
    pub ffn_multiplier: usize,
    /// Every output frame sees only its own subsampled input span:
    /// non-overlapping frontend kernels, no positional mixing, no attention.
    pub context_free_mode: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            feature_dim: 8,
            layers: 4,
            hidden_dim: 64,
            heads: 4,
            subsample_factor: 4,
            vocab_size: 31,
            positional_kernel: 15,
            positional_groups: 4,
            ffn_multiplier: 4,
            context_free_mode: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("feature_dim", self.feature_dim),
            ("hidden_dim", self.hidden_dim),
            ("heads", self.heads),
            ("subsample_factor", self.subsample_factor),
            ("vocab_size", self.vocab_size),
            ("positional_kernel", self.positional_kernel),
            ("positional_groups", self.positional_groups),
            ("ffn_multiplier", self.ffn_multiplier),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be at least 1")));
        }
        if self.hidden_dim % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "hidden_dim {} not divisible by heads {}",
                self.hidden_dim, self.heads
            )));
        }
        if self.hidden_dim % self.positional_groups != 0 {
            return Err(ModelError::Config(format!(
                "hidden_dim {} not divisible by positional_groups {}",
                self.hidden_dim, self.positional_groups
            )));
        }
        if !self.subsample_factor.is_power_of_two() {
            return Err(ModelError::Config(format!(
                "subsample_factor {} is not a power of two",
                self.subsample_factor
            )));
        }
        Ok(())
    }

    /// Number of stride-2 frontend convolutions.
    pub fn frontend_layers(&self) -> usize {
        self.subsample_factor.trailing_zeros() as usize
    }

    /// Emission frames for `frames` input frames: halve with ceiling once
    /// per frontend layer.
    pub fn output_frames(&self, frames: usize) -> usize {
        (0..self.frontend_layers()).fold(frames, |t, _| t.div_ceil(2))
    }
}
