//! Synthetic punctuated speech.
//!
//! Every non-punctuation character owns a fixed random feature signature
//! that is held for a few frames. Commas become short silences, sentence
//! ends long silences, and questions additionally ramp the last feature
//! dimension across the final word, a stand-in for rising intonation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, WeightedIndex};
use serde::{Deserialize, Serialize};

use super::features::{FeatureSequence, DEFAULT_HOP_MS};
use super::vocab::Vocabulary;
use super::{Corpus, DataError, Utterance};

const LETTERS: &str = "abcdefghijklmnopqrstuvwxyz";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub utterances: usize,
    /// Alphabet size: the first `letters` lowercase letters are used.
    pub letters: usize,
    pub lexicon_size: usize,
    pub word_len: (usize, usize),
    pub words_per_sentence: (usize, usize),
    /// Relative frequency of 1, 2 and 3 sentences per utterance.
    pub sentence_weights: [f64; 3],
    pub char_frames: (usize, usize),
    pub short_pause: (usize, usize),
    pub long_pause: (usize, usize),
    pub noise_sigma: f64,
    pub comma_prob: f64,
    pub question_prob: f64,
    pub apostrophe_prob: f64,
    /// Height of the rising ramp on question-final words.
    pub question_cue: f64,
    pub feature_dim: usize,
    pub hop_ms: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            utterances: 2000,
            letters: 12,
            lexicon_size: 60,
            word_len: (2, 4),
            words_per_sentence: (2, 4),
            sentence_weights: [0.6, 0.3, 0.1],
            char_frames: (6, 10),
            short_pause: (6, 9),
            long_pause: (16, 22),
            noise_sigma: 0.1,
            comma_prob: 0.2,
            question_prob: 0.3,
            apostrophe_prob: 0.1,
            question_cue: 2.0,
            feature_dim: 8,
            hop_ms: DEFAULT_HOP_MS,
            seed: 1,
        }
    }
}

fn check_range(name: &str, r: (usize, usize), min: usize) -> Result<(), DataError> {
    if r.0 < min || r.0 > r.1 {
        return Err(DataError::Config(format!("{name}: invalid range {r:?} (minimum {min})")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.utterances < 1 {
            return Err(DataError::Config("need at least one utterance".into()));
        }
        if !(4..=LETTERS.len()).contains(&self.letters) {
            return Err(DataError::Config(format!("letters must be in 4..=26, got {}", self.letters)));
        }
        check_range("word_len", self.word_len, 1)?;
        check_range("words_per_sentence", self.words_per_sentence, 1)?;
        check_range("char_frames", self.char_frames, 1)?;
        check_range("short_pause", self.short_pause, 1)?;
        check_range("long_pause", self.long_pause, 1)?;
        if self.short_pause.1 >= self.long_pause.0 {
            return Err(DataError::Config("short pauses must be shorter than long pauses".into()));
        }
        if self.lexicon_size < 1 || self.feature_dim < 2 {
            return Err(DataError::Config("lexicon_size ≥ 1 and feature_dim ≥ 2 required".into()));
        }
        if self.sentence_weights.iter().any(|w| !(*w >= 0.0)) || self.sentence_weights.iter().sum::<f64>() <= 0.0 {
            return Err(DataError::Config("sentence_weights must be non-negative with positive sum".into()));
        }
        for (name, p) in [
            ("comma_prob", self.comma_prob),
            ("question_prob", self.question_prob),
            ("apostrophe_prob", self.apostrophe_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(DataError::Config(format!("{name} must be a probability")));
            }
        }
        if !(self.noise_sigma >= 0.0) || !(self.hop_ms > 0.0) || !self.question_cue.is_finite() {
            return Err(DataError::Config("noise_sigma ≥ 0, hop_ms > 0 and a finite cue required".into()));
        }
        Ok(())
    }

    /// Letters plus space, apostrophe and the three marks.
    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(&format!("{} ',.?", &LETTERS[..self.letters])).expect("valid")
    }
}

/// Fixed per-character feature signatures drawn from the generator seed.
#[derive(Clone, Debug)]
pub struct SignatureTable {
    pub symbols: Vec<char>,
    pub signatures: Vec<Vec<f64>>,
}

impl SignatureTable {
    pub fn get(&self, c: char) -> Option<&[f64]> {
        self.symbols.iter().position(|&s| s == c).map(|i| self.signatures[i].as_slice())
    }
}

/// One utterance before rendering: words with their trailing marks.
#[derive(Clone, Debug)]
struct Script {
    words: Vec<(String, Option<char>)>,
}

impl Script {
    fn text(&self) -> String {
        self.words
            .iter()
            .map(|(w, m)| match m {
                Some(m) => format!("{w}{m}"),
                None => w.clone(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

pub struct Generator {
    config: GeneratorConfig,
    lexicon: Vec<String>,
    table: SignatureTable,
    rng: ChaCha8Rng,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self, DataError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let letters: Vec<char> = LETTERS[..config.letters].chars().collect();

        let mut symbols = letters.clone();
        symbols.extend([' ', '\'']);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let signatures = symbols
            .iter()
            .map(|_| (0..config.feature_dim).map(|_| unit.sample(&mut rng) as f32 as f64).collect())
            .collect();
        let table = SignatureTable { symbols, signatures };

        let mut lexicon: Vec<String> = Vec::new();
        let mut attempts = 0;
        while lexicon.len() < config.lexicon_size {
            attempts += 1;
            if attempts > 100 * config.lexicon_size + 1000 {
                return Err(DataError::Config("lexicon_size too large for the alphabet and word lengths".into()));
            }
            let len = rng.gen_range(config.word_len.0..=config.word_len.1);
            let mut word = String::new();
            let mut prev = None;
            for _ in 0..len {
                let c = loop {
                    let c = *letters.choose(&mut rng).expect("letters");
                    if Some(c) != prev {
                        break c;
                    }
                };
                word.push(c);
                prev = Some(c);
            }
            if len >= 2 && rng.gen_bool(config.apostrophe_prob) {
                let at = len - 1;
                word.insert(at, '\'');
            }
            if !lexicon.contains(&word) {
                lexicon.push(word);
            }
        }
        Ok(Self {
            config,
            lexicon,
            table,
            rng,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn signatures(&self) -> &SignatureTable {
        &self.table
    }

    pub fn lexicon(&self) -> &[String] {
        &self.lexicon
    }

    fn script(&mut self) -> Script {
        let cfg = &self.config;
        let sentences = WeightedIndex::new(cfg.sentence_weights)
            .expect("validated")
            .sample(&mut self.rng)
            + 1;
        let mut words = Vec::new();
        for _ in 0..sentences {
            let n = self.rng.gen_range(cfg.words_per_sentence.0..=cfg.words_per_sentence.1);
            let question = self.rng.gen_bool(cfg.question_prob);
            for i in 0..n {
                let w = self.lexicon.choose(&mut self.rng).expect("lexicon").clone();
                let mark = if i + 1 == n {
                    Some(if question { '?' } else { '.' })
                } else if self.rng.gen_bool(cfg.comma_prob) {
                    Some(',')
                } else {
                    None
                };
                words.push((w, mark));
            }
        }
        Script { words }
    }

    /// Renders text made of lexicon characters, spaces and marks into frames.
    pub fn render(&mut self, text: &str) -> Result<FeatureSequence, DataError> {
        let cfg = self.config.clone();
        let dim = cfg.feature_dim;
        let noise = Normal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid normal");
        let mut frames: Vec<Vec<f64>> = Vec::new();
        // frame index where the current word began
        let mut word_start = 0;
        let push = |frames: &mut Vec<Vec<f64>>, base: &[f64], rng: &mut ChaCha8Rng| {
            let row: Vec<f64> = base
                .iter()
                .map(|&b| {
                    let n = if cfg.noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
                    (b + n) as f32 as f64
                })
                .collect();
            frames.push(row);
        };
        let silence = vec![0.0; dim];
        for c in text.chars() {
            match c {
                ',' | '.' | '?' => {
                    if c == '?' {
                        let end = frames.len();
                        let span = (end - word_start).max(1) as f64;
                        for (i, row) in frames[word_start..end].iter_mut().enumerate() {
                            let cue = cfg.question_cue * (i + 1) as f64 / span;
                            row[dim - 1] = (row[dim - 1] + cue) as f32 as f64;
                        }
                    }
                    let range = if c == ',' { cfg.short_pause } else { cfg.long_pause };
                    let n = self.rng.gen_range(range.0..=range.1);
                    for _ in 0..n {
                        push(&mut frames, &silence, &mut self.rng);
                    }
                }
                _ => {
                    let sig = self
                        .table
                        .get(c)
                        .ok_or_else(|| DataError::Vocabulary(format!("no signature for {c:?}")))?
                        .to_vec();
                    let n = self.rng.gen_range(cfg.char_frames.0..=cfg.char_frames.1);
                    if c == ' ' {
                        word_start = frames.len() + n;
                    }
                    for _ in 0..n {
                        push(&mut frames, &sig, &mut self.rng);
                    }
                }
            }
        }
        if frames.is_empty() {
            return Err(DataError::Config("nothing to render".into()));
        }
        let t = frames.len();
        FeatureSequence::new(t, dim, frames.concat(), cfg.hop_ms)
    }

    pub fn next_utterance(&mut self, index: usize) -> Result<Utterance, DataError> {
        let script = self.script();
        let text = script.text();
        let features = self.render(&text)?;
        Utterance::new(format!("utt{index:05}"), features, text, &self.config.vocabulary())
    }

    /// Generates the configured number of utterances.
    pub fn corpus(&mut self) -> Result<Corpus, DataError> {
        let utterances = (0..self.config.utterances)
            .map(|i| self.next_utterance(i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Corpus {
            vocabulary: self.config.vocabulary(),
            feature_dim: self.config.feature_dim,
            hop_ms: self.config.hop_ms,
            utterances,
        })
    }
}

/// Decodes noise-free generated features by nearest-signature lookup on all
/// but the cue dimension, then reads marks from silence lengths and the cue.
pub fn signature_oracle_decode(table: &SignatureTable, cfg: &GeneratorConfig, features: &FeatureSequence) -> String {
    let dim = features.dim();
    let core = dim - 1;
    let dist = |a: &[f64], b: &[f64]| -> f64 { a[..core].iter().zip(&b[..core]).map(|(x, y)| (x - y) * (x - y)).sum() };

    // (symbol or None for silence, length, cue residual at run end)
    let mut runs: Vec<(Option<char>, usize, f64)> = Vec::new();
    for t in 0..features.frames() {
        let row = features.row(t);
        let mut best: (Option<char>, f64) = (None, dist(row, &vec![0.0; dim]));
        for (s, sig) in table.symbols.iter().zip(&table.signatures) {
            let d = dist(row, sig);
            if d < best.1 {
                best = (Some(*s), d);
            }
        }
        let residual = match best.0 {
            Some(c) => row[core] - table.get(c).expect("known")[core],
            None => row[core],
        };
        match runs.last_mut() {
            Some(last) if last.0 == best.0 => {
                last.1 += 1;
                last.2 = residual;
            }
            _ => runs.push((best.0, 1, residual)),
        }
    }

    let mut out = String::new();
    let mut last_cue = 0.0;
    for (sym, len, cue) in runs {
        match sym {
            Some(c) => {
                out.push(c);
                last_cue = cue;
            }
            None => {
                let mark = if len <= cfg.short_pause.1 {
                    ','
                } else if last_cue > cfg.question_cue / 2.0 {
                    '?'
                } else {
                    '.'
                };
                out.push(mark);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::normalize_text;

    fn small() -> GeneratorConfig {
        GeneratorConfig {
            utterances: 40,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = Generator::new(small()).unwrap().corpus().unwrap();
        let b = Generator::new(small()).unwrap().corpus().unwrap();
        assert_eq!(a.utterances, b.utterances);
        let c = Generator::new(GeneratorConfig { seed: 2, ..small() }).unwrap().corpus().unwrap();
        assert_ne!(a.utterances, c.utterances);
    }

    #[test]
    fn transcripts_are_normalized_and_tokenizable() {
        let corpus = Generator::new(small()).unwrap().corpus().unwrap();
        for u in &corpus.utterances {
            assert_eq!(normalize_text(&u.transcript), u.transcript);
            assert!(u.transcript.ends_with('.') || u.transcript.ends_with('?'));
            assert_eq!(corpus.vocabulary.tokenize(&u.transcript).unwrap(), u.tokens);
        }
        assert!(corpus.vocabulary.len() <= 30);
    }

    #[test]
    fn frame_count_follows_rules() {
        let cfg = GeneratorConfig {
            char_frames: (3, 3),
            short_pause: (3, 5),
            long_pause: (8, 12),
            ..small()
        };
        let mut g = Generator::new(cfg).unwrap();
        for _ in 0..20 {
            let f = g.render("ab, cd.").unwrap();
            // a b ␣ c d at 3 frames each, then one short and one long pause
            let base = 5 * 3;
            assert!((base + 3 + 8..=base + 5 + 12).contains(&f.frames()), "{}", f.frames());
        }
    }

    #[test]
    fn zero_noise_oracle_recovers_transcripts() {
        let cfg = GeneratorConfig {
            noise_sigma: 0.0,
            ..small()
        };
        let mut g = Generator::new(cfg.clone()).unwrap();
        let corpus = g.corpus().unwrap();
        for u in &corpus.utterances {
            let decoded = signature_oracle_decode(g.signatures(), &cfg, &u.features);
            assert_eq!(decoded, u.transcript);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(Generator::new(GeneratorConfig { letters: 3, ..small() }).is_err());
        assert!(Generator::new(GeneratorConfig { utterances: 0, ..small() }).is_err());
        assert!(Generator::new(GeneratorConfig {
            short_pause: (5, 12),
            long_pause: (8, 12),
            ..small()
        })
        .is_err());
    }
}
