use serde::{Deserialize, Serialize};

use super::DataError;

/// Label ids over a [`Vocabulary`]. Ids are 0-based and never include the
/// CTC blank, which lives at lattice class 0 (so label `i` is class `i + 1`).
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenSequence(Vec<usize>);

impl TokenSequence {
    pub fn new(ids: Vec<usize>) -> Self {
        Self(ids)
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_ids(self) -> Vec<usize> {
        self.0
    }

    /// Number of adjacent equal labels; each one forces an extra blank frame.
    pub fn repeats(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] == w[1]).count()
    }
}

impl From<Vec<usize>> for TokenSequence {
    fn from(ids: Vec<usize>) -> Self {
        Self(ids)
    }
}

/// Character vocabulary. Must contain the space and the scored marks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    symbols: Vec<char>,
}

pub const SCORED_MARKS: [char; 3] = [',', '.', '?'];

impl Vocabulary {
    pub fn new(symbols: &str) -> Result<Self, DataError> {
        let symbols: Vec<char> = symbols.chars().collect();
        for (i, c) in symbols.iter().enumerate() {
            if symbols[..i].contains(c) {
                return Err(DataError::Vocabulary(format!("duplicate symbol {c:?}")));
            }
        }
        for required in [' ', '\'', ',', '.', '?'] {
            if !symbols.contains(&required) {
                return Err(DataError::Vocabulary(format!("missing required symbol {required:?}")));
            }
        }
        Ok(Self { symbols })
    }

    /// Lowercase English letters plus space, apostrophe and the three marks.
    pub fn english() -> Self {
        Self::new("abcdefghijklmnopqrstuvwxyz ',.?").expect("valid")
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn as_string(&self) -> String {
        self.symbols.iter().collect()
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.symbols.iter().position(|&s| s == c)
    }

    pub fn space(&self) -> usize {
        self.id(' ').expect("space is required")
    }

    pub fn tokenize(&self, text: &str) -> Result<TokenSequence, DataError> {
        text.chars()
            .map(|c| {
                self.id(c)
                    .ok_or_else(|| DataError::Vocabulary(format!("symbol {c:?} not in vocabulary")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(TokenSequence)
    }

    pub fn detokenize(&self, tokens: &TokenSequence) -> String {
        tokens
            .ids()
            .iter()
            .map(|&i| self.symbols.get(i).copied().unwrap_or('\u{fffd}'))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let v = Vocabulary::english();
        let s = "it's fine, ok. really?";
        assert_eq!(v.detokenize(&v.tokenize(s).unwrap()), s);
        assert!(v.tokenize("Caps").is_err());
    }

    #[test]
    fn requires_marks() {
        assert!(Vocabulary::new("ab ',.").is_err());
        assert!(Vocabulary::new("aab ',.?").is_err());
    }

    #[test]
    fn repeats_counted() {
        assert_eq!(TokenSequence::new(vec![1, 1, 2, 2, 2, 3]).repeats(), 3);
        assert_eq!(TokenSequence::new(vec![]).repeats(), 0);
    }
}
