//! Punctuation-free WER, word alignment and per-mark punctuation scores.

mod align;
mod report;

pub use align::{align, edit_distance, split_words, AlignOp, AlignedPair, Punct};
pub use report::{
    interior_period_recall, punct_scores, score_corpus, wer, MarkCounts, MarkScore, PunctScores, ScoreReport,
    WER_EMPTY_REFERENCE,
};

/// Percent with one decimal, the precision reports use.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}
