//! Vocabulary, text normalization, features, the synthetic corpus, manifests
//! and batching.

mod batch;
mod features;
mod generate;
mod manifest;
mod text;
mod vocab;

pub use batch::{concat_pairs, Batch, FrameBudgetSampler};
pub use features::{FeatureSequence, DEFAULT_HOP_MS, FEATURE_MAGIC, FEATURE_VERSION};
pub use generate::{signature_oracle_decode, Generator, GeneratorConfig, SignatureTable};
pub use manifest::{read_manifest, write_manifest, ManifestHeader, ManifestRecord, MANIFEST_FORMAT};
pub use text::normalize_text;
pub use vocab::{TokenSequence, Vocabulary, SCORED_MARKS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("format: {0}")]
    Format(String),
    #[error("config: {0}")]
    Config(String),
    #[error("batch: {0}")]
    Batch(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One labelled recording. `tokens` is the tokenized `transcript`.
#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub features: FeatureSequence,
    pub transcript: String,
    pub tokens: TokenSequence,
}

impl Utterance {
    pub fn new(id: String, features: FeatureSequence, transcript: String, vocab: &Vocabulary) -> Result<Self, DataError> {
        let tokens = vocab.tokenize(&transcript)?;
        Ok(Self {
            id,
            features,
            transcript,
            tokens,
        })
    }

    pub fn frames(&self) -> usize {
        self.features.frames()
    }
}

/// Utterances sharing one vocabulary and feature layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub feature_dim: usize,
    pub hop_ms: f64,
    pub utterances: Vec<Utterance>,
}
