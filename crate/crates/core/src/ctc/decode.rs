use std::cmp::Ordering;
use std::collections::HashMap;

use crate::data::TokenSequence;
use crate::numerics::{log_add, logsumexp};

use super::lattice::{EmissionLattice, BLANK};
use super::CtcError;

/// Output of a decoder.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DecodeResult {
    pub tokens: TokenSequence,
    /// Log-probability: best-path score for greedy, prefix mass for beam.
    pub score: f64,
    /// Frame at which each token was first emitted; strictly increasing.
    pub frame_offsets: Vec<usize>,
}

/// Removes repeats, then blanks, from a class-index path. Returns label ids.
pub fn collapse(path: &[usize]) -> TokenSequence {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != BLANK {
            out.push(k - 1);
        }
        prev = Some(k);
    }
    TokenSequence::new(out)
}

/// Best path: per-frame argmax, collapsed.
pub fn greedy_decode(lattice: &EmissionLattice) -> DecodeResult {
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();
    let mut score = 0.0;
    let mut prev = BLANK;
    for t in 0..lattice.frames() {
        let row = lattice.row(t);
        let mut best = 0;
        for k in 1..row.len() {
            if row[k] > row[best] {
                best = k;
            }
        }
        score += row[best];
        if best != BLANK && best != prev {
            tokens.push(best - 1);
            offsets.push(t);
        }
        prev = best;
    }
    DecodeResult {
        tokens: TokenSequence::new(tokens),
        score,
        frame_offsets: offsets,
    }
}

#[derive(Clone, Debug)]
struct Prefix {
    tokens: Vec<usize>,
    offsets: Vec<usize>,
    /// log-mass of paths ending in blank
    blank: f64,
    /// log-mass of paths ending in the last label
    label: f64,
}

impl Prefix {
    fn total(&self) -> f64 {
        log_add(self.blank, self.label)
    }
}

/// Highest mass first, then lexicographically smaller token sequence.
fn rank(a: &Prefix, b: &Prefix) -> Ordering {
    b.total()
        .total_cmp(&a.total())
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Incremental CTC prefix beam search. Frames are fed one at a time, so the
/// same state serves batch and streaming decoding.
#[derive(Clone, Debug)]
pub struct PrefixBeamSearch {
    beam: usize,
    classes: usize,
    frames_seen: usize,
    beams: Vec<Prefix>,
}

impl PrefixBeamSearch {
    /// `beam == usize::MAX` keeps every prefix.
    pub fn new(beam: usize, vocab_size: usize) -> Result<Self, CtcError> {
        if beam < 1 {
            return Err(CtcError::InvalidBeam(beam));
        }
        Ok(Self {
            beam,
            classes: vocab_size + 1,
            frames_seen: 0,
            beams: vec![Prefix {
                tokens: Vec::new(),
                offsets: Vec::new(),
                blank: 0.0,
                label: f64::NEG_INFINITY,
            }],
        })
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn push_frame(&mut self, row: &[f64]) -> Result<(), CtcError> {
        if row.len() != self.classes {
            return Err(CtcError::Shape(format!(
                "frame has {} classes, decoder expects {}",
                row.len(),
                self.classes
            )));
        }
        let t = self.frames_seen;
        let previous: HashMap<&[usize], &Prefix> =
            self.beams.iter().map(|p| (p.tokens.as_slice(), p)).collect();
        let mut next: HashMap<Vec<usize>, Prefix> = HashMap::with_capacity(self.beams.len() * self.classes);

        let entry = |tokens: Vec<usize>, parent_offsets: &[usize]| -> Vec<usize> {
            match previous.get(tokens.as_slice()) {
                Some(p) => p.offsets.clone(),
                None => {
                    let mut o = parent_offsets.to_vec();
                    o.push(t);
                    o
                }
            }
        };

        for p in &self.beams {
            let total = p.total();
            // blank keeps the prefix
            let slot = next.entry(p.tokens.clone()).or_insert_with(|| Prefix {
                tokens: p.tokens.clone(),
                offsets: p.offsets.clone(),
                blank: f64::NEG_INFINITY,
                label: f64::NEG_INFINITY,
            });
            slot.blank = log_add(slot.blank, total + row[BLANK]);

            let last = p.tokens.last().copied();
            for (k, &lp) in row.iter().enumerate().skip(1) {
                let id = k - 1;
                if Some(id) == last {
                    // repeated label without blank collapses into the same prefix
                    let slot = next.get_mut(&p.tokens).expect("inserted above");
                    slot.label = log_add(slot.label, p.label + lp);
                    if p.blank == f64::NEG_INFINITY {
                        continue;
                    }
                }
                let mut ext = p.tokens.clone();
                ext.push(id);
                let from = if Some(id) == last { p.blank } else { total };
                if !next.contains_key(&ext) {
                    let offsets = entry(ext.clone(), &p.offsets);
                    next.insert(
                        ext.clone(),
                        Prefix {
                            tokens: ext.clone(),
                            offsets,
                            blank: f64::NEG_INFINITY,
                            label: f64::NEG_INFINITY,
                        },
                    );
                }
                let slot = next.get_mut(&ext).expect("present");
                slot.label = log_add(slot.label, from + lp);
            }
        }

        let mut beams: Vec<Prefix> = next.into_values().collect();
        beams.sort_by(rank);
        beams.truncate(self.beam);
        self.beams = beams;
        self.frames_seen += 1;
        Ok(())
    }

    pub fn push_lattice(&mut self, lattice: &EmissionLattice) -> Result<(), CtcError> {
        for t in 0..lattice.frames() {
            self.push_frame(lattice.row(t))?;
        }
        Ok(())
    }

    /// Current best prefix.
    pub fn best(&self) -> DecodeResult {
        let p = &self.beams[0];
        DecodeResult {
            tokens: TokenSequence::new(p.tokens.clone()),
            score: p.total(),
            frame_offsets: p.offsets.clone(),
        }
    }

    /// All surviving prefixes with their masses, best first.
    pub fn hypotheses(&self) -> Vec<(TokenSequence, f64)> {
        self.beams
            .iter()
            .map(|p| (TokenSequence::new(p.tokens.clone()), p.total()))
            .collect()
    }

    /// Total mass currently held by the beam.
    pub fn retained_mass(&self) -> f64 {
        let totals: Vec<f64> = self.beams.iter().map(Prefix::total).collect();
        logsumexp(&totals)
    }
}

/// Prefix beam search over a whole lattice.
pub fn beam_decode(lattice: &EmissionLattice, beam: usize) -> Result<DecodeResult, CtcError> {
    let mut search = PrefixBeamSearch::new(beam, lattice.vocab_size())?;
    search.push_lattice(lattice)?;
    Ok(search.best())
}
