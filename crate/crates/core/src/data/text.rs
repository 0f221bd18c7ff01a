/// Longest leading token treated as a speaker label (`"MJ:"`).
const MAX_SPEAKER_LEN: usize = 20;

fn is_kept_mark(c: char) -> bool {
    matches!(c, '\'' | ',' | '.' | '?')
}

/// Drops `( … )` and `[ … ]` spans. An opener with no closer is dropped alone.
fn strip_bracketed(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let close = match c {
            '(' => Some(')'),
            '[' => Some(']'),
            _ => None,
        };
        if let Some(close) = close {
            if let Some(off) = chars[i + 1..].iter().position(|&x| x == close) {
                out.push(' ');
                i += off + 2;
                continue;
            }
        }
        out.push(c);
        i += 1;
    }
    out
}

fn strip_speaker(s: &str) -> &str {
    let trimmed = s.trim_start();
    let end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
    let first = &trimmed[..end];
    if first.len() > 1 && first.ends_with(':') && first.chars().count() <= MAX_SPEAKER_LEN {
        &trimmed[end..]
    } else {
        s
    }
}

/// Label normalization: lowercase, drop bracketed environment labels and a
/// leading speaker tag, drop punctuation other than `' , . ?`, collapse
/// whitespace.
pub fn normalize_text(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let no_brackets = strip_bracketed(&lower);
    let body = strip_speaker(&no_brackets);
    let filtered: String = body
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() || is_kept_mark(c) {
                c
            } else {
                ' '
            }
        })
        .collect();
    filtered.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn environment_and_speaker_labels() {
        assert_eq!(normalize_text("(Applause) MJ: Hello, World!"), "hello, world");
        assert_eq!(normalize_text("[Laughter] so (Music) yes."), "so yes.");
    }

    #[test]
    fn kept_marks() {
        assert_eq!(normalize_text("really?"), "really?");
        assert_eq!(normalize_text("it's — fine; ok."), "it's fine ok.");
    }

    #[test]
    fn speaker_rule_is_conservative() {
        // only a short leading token
        assert_eq!(normalize_text("note: this"), "this");
        assert_eq!(normalize_text("we said: this"), "we said this");
        assert_eq!(
            normalize_text("averyveryverylongspeakername: hi"),
            "averyveryverylongspeakername hi"
        );
    }

    #[test]
    fn unmatched_bracket_dropped_alone() {
        assert_eq!(normalize_text("a (b c"), "a b c");
    }

    proptest! {
        #[test]
        fn idempotent(s in "[A-Za-z ,.?!'():;\\[\\]-]{0,40}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn tokenizer_round_trips(s in "[A-Za-z ,.?!'():;-]{0,40}") {
            let v = crate::data::Vocabulary::english();
            let n = normalize_text(&s);
            let toks = v.tokenize(&n).unwrap();
            prop_assert_eq!(v.detokenize(&toks), n);
        }
    }
}
