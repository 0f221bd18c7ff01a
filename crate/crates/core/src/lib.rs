//! Chunk-based streaming CTC recognition with end-to-end punctuation.

pub mod chunking;
pub mod ctc;
pub mod data;
pub mod model;
pub mod numerics;
pub mod score;
pub mod train;
