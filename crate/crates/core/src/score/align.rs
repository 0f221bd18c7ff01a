use serde::{Deserialize, Serialize};

/// Punctuation class of a word, taken from its trailing mark.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Punct {
    #[default]
    None,
    Comma,
    Period,
    Question,
}

impl Punct {
    pub fn of(c: char) -> Option<Self> {
        match c {
            ',' => Some(Punct::Comma),
            '.' => Some(Punct::Period),
            '?' => Some(Punct::Question),
            _ => None,
        }
    }

    /// The three scored marks, in report order.
    pub const MARKS: [Punct; 3] = [Punct::Comma, Punct::Period, Punct::Question];

    pub fn symbol(self) -> &'static str {
        match self {
            Punct::None => "",
            Punct::Comma => ",",
            Punct::Period => ".",
            Punct::Question => "?",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignOp {
    Match,
    Substitute,
    Delete,
    Insert,
    /// A mark with no word before it. Carries only a punctuation class.
    Stray,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignedPair {
    pub ref_word: Option<String>,
    pub hyp_word: Option<String>,
    pub op: AlignOp,
    pub ref_punct: Punct,
    pub hyp_punct: Punct,
}

/// Words with their punctuation class, plus marks that precede every word.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Words {
    pub words: Vec<String>,
    pub puncts: Vec<Punct>,
    pub stray: Vec<Punct>,
}

/// Splits on whitespace and strips marks from each token. The token's
/// trailing mark (the last one, if several) is its class; marks before any
/// letter attach to the previous word.
pub fn split_words(text: &str) -> Words {
    let mut out = Words::default();
    for token in text.split_whitespace() {
        let mut word = String::new();
        let mut trailing = Punct::None;
        for c in token.chars() {
            match Punct::of(c) {
                Some(p) if word.is_empty() => match out.puncts.last_mut() {
                    Some(last) => *last = p,
                    None => out.stray.push(p),
                },
                Some(p) => trailing = p,
                None => {
                    // a mark between letters is stripped like any other
                    trailing = Punct::None;
                    word.push(c);
                }
            }
        }
        if !word.is_empty() {
            out.words.push(word);
            out.puncts.push(trailing);
        }
    }
    out
}

fn dp(r: &[String], h: &[String]) -> Vec<Vec<usize>> {
    let mut d = vec![vec![0usize; h.len() + 1]; r.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=h.len() {
        d[0][j] = j;
    }
    for i in 1..=r.len() {
        for j in 1..=h.len() {
            let diag = d[i - 1][j - 1] + usize::from(r[i - 1] != h[j - 1]);
            d[i][j] = diag.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d
}

/// Unit-cost Levenshtein distance over words.
pub fn edit_distance(r: &[String], h: &[String]) -> usize {
    dp(r, h)[r.len()][h.len()]
}

/// When deleting and inserting are both optimal, step towards the diagonal,
/// and on the diagonal drop the lexicographically smaller word. The rule
/// mirrors itself when the two sides are swapped.
fn prefer_delete(r: &[String], h: &[String], i: usize, j: usize) -> bool {
    match i.cmp(&j) {
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Equal => r[i - 1] < h[j - 1],
    }
}

/// Minimum-edit word alignment of punctuation-stripped words. Among optimal
/// predecessors the backtrace prefers match, then substitute, then a delete
/// or insert chosen so that swapping the sides mirrors the alignment.
pub fn align(reference: &str, hypothesis: &str) -> Vec<AlignedPair> {
    let r = split_words(reference);
    let h = split_words(hypothesis);
    let d = dp(&r.words, &h.words);
    let (mut i, mut j) = (r.words.len(), h.words.len());
    let mut rev = Vec::new();
    while i > 0 || j > 0 {
        let here = d[i][j];
        if i > 0 && j > 0 && r.words[i - 1] == h.words[j - 1] && d[i - 1][j - 1] == here {
            rev.push((Some(i - 1), Some(j - 1), AlignOp::Match));
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && d[i - 1][j - 1] + 1 == here {
            rev.push((Some(i - 1), Some(j - 1), AlignOp::Substitute));
            i -= 1;
            j -= 1;
        } else if i > 0 && d[i - 1][j] + 1 == here && (j == 0 || d[i][j - 1] + 1 != here || prefer_delete(&r.words, &h.words, i, j)) {
            rev.push((Some(i - 1), None, AlignOp::Delete));
            i -= 1;
        } else {
            rev.push((None, Some(j - 1), AlignOp::Insert));
            j -= 1;
        }
    }
    let stray = |p: Punct, in_ref: bool| AlignedPair {
        ref_word: None,
        hyp_word: None,
        op: AlignOp::Stray,
        ref_punct: if in_ref { p } else { Punct::None },
        hyp_punct: if in_ref { Punct::None } else { p },
    };
    let mut pairs: Vec<AlignedPair> = r.stray.iter().map(|&p| stray(p, true)).collect();
    pairs.extend(h.stray.iter().map(|&p| stray(p, false)));
    pairs.extend(rev.into_iter().rev().map(|(ri, hi, op)| AlignedPair {
        ref_word: ri.map(|k| r.words[k].clone()),
        hyp_word: hi.map(|k| h.words[k].clone()),
        op,
        ref_punct: ri.map_or(Punct::None, |k| r.puncts[k]),
        hyp_punct: hi.map_or(Punct::None, |k| h.puncts[k]),
    }));
    pairs
}
