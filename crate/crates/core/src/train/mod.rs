//! Joint full-sequence and chunk CTC training on concatenated pairs.

mod fit;
mod optim;
mod step;

pub use fit::{fit, load_state, save_state, FitOptions};
pub use optim::Adam;
pub use step::{train_step, TrainState};

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunking::{ChunkError, ChunkPlan};
use crate::ctc::CtcError;
use crate::data::DataError;
use crate::model::{EncoderConfig, ModelError};
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("train config: {0}")]
    Config(String),
    #[error("non-finite loss at step {step}; batch ids: {ids:?}")]
    NonFinite { step: u64, ids: Vec<String> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Ctc(#[from] CtcError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Which parts of the method are switched on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Concatenated pairs and the interpolated chunk loss.
    #[default]
    Full,
    /// Concatenated pairs, full-sequence loss only.
    #[serde(alias = "no-chunk-loss")]
    NoChunkLoss,
    /// Raw utterances into both loss paths.
    #[serde(alias = "no-concat")]
    NoConcat,
}

impl Ablation {
    pub fn concatenates(self) -> bool {
        self != Ablation::NoConcat
    }

    pub fn uses_chunk_loss(self) -> bool {
        self != Ablation::NoChunkLoss
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::NoChunkLoss => "no-chunk-loss",
            Ablation::NoConcat => "no-concat",
        })
    }
}

impl FromStr for Ablation {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "full" => Ok(Ablation::Full),
            "no-chunk-loss" => Ok(Ablation::NoChunkLoss),
            "no-concat" => Ok(Ablation::NoConcat),
            _ => Err(TrainError::Config(format!("unknown ablation {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub lr: f64,
    pub warmup_steps: u64,
    pub max_steps: u64,
    /// Frame budget per batch, counted on the raw utterances.
    pub batch_max_tokens: usize,
    pub ablation: Ablation,
    pub seed: u64,
    pub checkpoint_every: u64,
    pub chunk: ChunkPlan,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            lr: 1e-3,
            warmup_steps: 200,
            max_steps: 2000,
            batch_max_tokens: 4000,
            ablation: Ablation::Full,
            seed: 0,
            checkpoint_every: 500,
            chunk: ChunkPlan {
                chunk_frames: 100,
                left_frames: 200,
                right_frames: 100,
                subsample_factor: 4,
            },
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(TrainError::Config(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if self.warmup_steps < 1 {
            return Err(TrainError::Config("warmup_steps must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(TrainError::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.batch_max_tokens == 0 || self.checkpoint_every == 0 {
            return Err(TrainError::Config("batch_max_tokens and checkpoint_every must be positive".into()));
        }
        self.encoder.validate()?;
        self.chunk.validate()?;
        if self.chunk.subsample_factor != self.encoder.subsample_factor {
            return Err(TrainError::Config(format!(
                "chunk plan subsample factor {} differs from the encoder's {}",
                self.chunk.subsample_factor, self.encoder.subsample_factor
            )));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Linear warmup to `lr` at `warmup_steps`, then inverse square root decay.
pub fn lr_at(step: u64, cfg: &TrainConfig) -> f64 {
    let step = step.max(1) as f64;
    let warmup = cfg.warmup_steps as f64;
    if step < warmup {
        cfg.lr * step / warmup
    } else {
        cfg.lr * (warmup / step).sqrt()
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub step: u64,
    pub l_ctc: f64,
    /// Absent when the chunk path is switched off.
    pub l_chunk: Option<f64>,
    pub l_total: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub utterances: usize,
    pub skipped: usize,
    pub wall_ms: f64,
}
