//! Connectionist temporal classification: loss, occupancy posteriors,
//! a brute-force oracle and decoders. Blank is always class 0.

mod decode;
mod lattice;
mod loss;
mod oracle;

pub use decode::{beam_decode, collapse, greedy_decode, DecodeResult, PrefixBeamSearch};
pub use lattice::{EmissionLattice, BLANK};
pub use loss::{check_feasible, ctc_loss, ctc_loss_node, occupancy, CtcOutput};
pub use oracle::{ctc_oracle, label_sequence_masses, ORACLE_MAX_FRAMES, ORACLE_MAX_VOCAB};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtcError {
    #[error("lattice has no frames")]
    EmptyLattice,
    #[error("target needs at least {required} frames, lattice has {frames}")]
    Infeasible { frames: usize, required: usize },
    #[error("target has zero probability under the lattice")]
    ZeroProbability,
    #[error("lattice row {frame} is not normalized (logsumexp {logsumexp})")]
    NotNormalized { frame: usize, logsumexp: f64 },
    #[error("oracle limited to {max_t} frames and {max_v} labels, got {frames} and {vocab}", max_t = ORACLE_MAX_FRAMES, max_v = ORACLE_MAX_VOCAB)]
    OracleGuard { frames: usize, vocab: usize },
    #[error("beam width must be at least 1, got {0}")]
    InvalidBeam(usize),
    #[error("shape error: {0}")]
    Shape(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[cfg(test)]
mod tests;
