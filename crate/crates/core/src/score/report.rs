use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::align::{align, edit_distance, split_words, AlignedPair, Punct};
use super::round1;

/// WER reported when the reference has no words but the hypothesis does.
pub const WER_EMPTY_REFERENCE: f64 = f64::INFINITY;

fn word_edits(reference: &str, hypothesis: &str) -> (usize, usize) {
    let r = split_words(reference).words;
    let h = split_words(hypothesis).words;
    (edit_distance(&r, &h), r.len())
}

fn wer_from(edits: usize, ref_words: usize) -> f64 {
    if ref_words == 0 {
        if edits == 0 {
            return 0.0;
        }
        log::warn!("{edits} inserted words against an empty reference");
        return WER_EMPTY_REFERENCE;
    }
    100.0 * edits as f64 / ref_words as f64
}

/// Word error rate in percent with `, . ?` removed from both sides.
pub fn wer(reference: &str, hypothesis: &str) -> f64 {
    let (e, n) = word_edits(reference, hypothesis);
    wer_from(e, n)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl MarkCounts {
    fn add(&mut self, o: &MarkCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarkScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MarkScore {
    pub fn from_counts(c: &MarkCounts) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { 100.0 * a as f64 / b as f64 };
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

/// Per-mark counts and scores for `,` `.` `?` plus their unweighted mean.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PunctScores {
    pub counts: [MarkCounts; 3],
    pub marks: [MarkScore; 3],
    pub macro_avg: MarkScore,
}

impl PunctScores {
    pub fn from_counts(counts: [MarkCounts; 3]) -> Self {
        let marks = counts.map(|c| MarkScore::from_counts(&c));
        let mean = |f: fn(&MarkScore) -> f64| marks.iter().map(f).sum::<f64>() / 3.0;
        let macro_avg = MarkScore {
            precision: mean(|m| m.precision),
            recall: mean(|m| m.recall),
            f1: mean(|m| m.f1),
        };
        Self {
            counts,
            marks,
            macro_avg,
        }
    }
}

fn count_pairs(pairs: &[AlignedPair]) -> [MarkCounts; 3] {
    let mut counts = [MarkCounts::default(); 3];
    for p in pairs {
        for (k, &m) in Punct::MARKS.iter().enumerate() {
            let (r, h) = (p.ref_punct == m, p.hyp_punct == m);
            match (r, h) {
                (true, true) => counts[k].tp += 1,
                (false, true) => counts[k].fp += 1,
                (true, false) => counts[k].fn_ += 1,
                (false, false) => {}
            }
        }
    }
    counts
}

pub fn punct_scores(pairs: &[AlignedPair]) -> PunctScores {
    PunctScores::from_counts(count_pairs(pairs))
}

/// Reference periods that are not on the last reference word, and how many
/// of them the hypothesis reproduced on the aligned word.
pub fn interior_period_recall(pairs: &[AlignedPair]) -> (usize, usize) {
    let last_ref = pairs.iter().rposition(|p| p.ref_word.is_some());
    let mut hits = 0;
    let mut total = 0;
    for (i, p) in pairs.iter().enumerate() {
        if p.ref_punct == Punct::Period && p.ref_word.is_some() && Some(i) != last_ref {
            total += 1;
            if p.hyp_punct == Punct::Period {
                hits += 1;
            }
        }
    }
    (hits, total)
}

/// Corpus-level scores. Edits and punctuation counts are pooled over all
/// utterances before any ratio is taken.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub wer: f64,
    pub punct: PunctScores,
    pub word_edits: usize,
    pub ref_words: usize,
    pub utterances: usize,
    /// References with no hypothesis, scored against an empty string.
    pub missing: usize,
}

#[derive(Serialize)]
struct MarkRecord<'a> {
    record: &'a str,
    mark: &'a str,
    precision: f64,
    recall: f64,
    f1: f64,
    tp: usize,
    fp: usize,
    #[serde(rename = "fn")]
    fn_: usize,
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    record: &'a str,
    pooling: &'a str,
    wer: f64,
    precision: f64,
    recall: f64,
    f1: f64,
    word_edits: usize,
    ref_words: usize,
    utterances: usize,
    missing: usize,
}

impl ScoreReport {
    /// One JSON object per mark, then a summary. Percentages carry one
    /// decimal.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (k, m) in Punct::MARKS.iter().enumerate() {
            let s = &self.punct.marks[k];
            let c = &self.punct.counts[k];
            let rec = MarkRecord {
                record: "mark",
                mark: m.symbol(),
                precision: round1(s.precision),
                recall: round1(s.recall),
                f1: round1(s.f1),
                tp: c.tp,
                fp: c.fp,
                fn_: c.fn_,
            };
            out.push_str(&serde_json::to_string(&rec).expect("serializable"));
            out.push('\n');
        }
        let a = &self.punct.macro_avg;
        let summary = SummaryRecord {
            record: "summary",
            pooling: "corpus",
            wer: if self.wer.is_finite() { round1(self.wer) } else { -1.0 },
            precision: round1(a.precision),
            recall: round1(a.recall),
            f1: round1(a.f1),
            word_edits: self.word_edits,
            ref_words: self.ref_words,
            utterances: self.utterances,
            missing: self.missing,
        };
        out.push_str(&serde_json::to_string(&summary).expect("serializable"));
        out.push('\n');
        out
    }

    /// Column headers of [`table`](Self::table), left to right.
    pub fn columns() -> Vec<String> {
        let mut cols = vec!["WER".to_string()];
        for metric in ["P", "R", "F1"] {
            for mark in [",", ".", "?", "avg."] {
                cols.push(format!("{metric} {mark}"));
            }
        }
        cols
    }

    /// Fixed-width table: WER, then precision, recall and F1 for each mark
    /// and their average.
    pub fn table(&self) -> String {
        let cols = Self::columns();
        let mut values = vec![if self.wer.is_finite() {
            format!("{:.1}", self.wer)
        } else {
            "inf".into()
        }];
        let pick: [fn(&MarkScore) -> f64; 3] = [|m| m.precision, |m| m.recall, |m| m.f1];
        for f in pick {
            for m in &self.punct.marks {
                values.push(format!("{:.1}", f(m)));
            }
            values.push(format!("{:.1}", f(&self.punct.macro_avg)));
        }
        let mut out = String::from("# counts pooled over the corpus\n");
        let width = 8;
        for c in &cols {
            let _ = write!(out, "{c:>width$}");
        }
        out.push('\n');
        for v in &values {
            let _ = write!(out, "{v:>width$}");
        }
        out.push('\n');
        out
    }
}

/// Scores hypotheses against references keyed by utterance id. References
/// without a hypothesis are scored against an empty string.
pub fn score_corpus(references: &BTreeMap<String, String>, hypotheses: &HashMap<String, String>) -> ScoreReport {
    let mut counts = [MarkCounts::default(); 3];
    let mut edits = 0;
    let mut words = 0;
    let mut missing = 0;
    for (id, reference) in references {
        let hyp = match hypotheses.get(id) {
            Some(h) => h.as_str(),
            None => {
                missing += 1;
                ""
            }
        };
        let (e, n) = word_edits(reference, hyp);
        edits += e;
        words += n;
        let c = count_pairs(&align(reference, hyp));
        for k in 0..3 {
            counts[k].add(&c[k]);
        }
    }
    if missing > 0 {
        log::warn!("{missing} references have no hypothesis");
    }
    ScoreReport {
        wer: wer_from(edits, words),
        punct: PunctScores::from_counts(counts),
        word_edits: edits,
        ref_words: words,
        utterances: references.len(),
        missing,
    }
}
