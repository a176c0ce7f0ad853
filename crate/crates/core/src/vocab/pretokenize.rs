use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

/// A whitespace- and punctuation-delimited surface token. Offsets count
/// Unicode scalar values, half-open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreToken {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// Punctuation as BERT's basic tokenizer defines it: every non-alphanumeric
/// printable ASCII character, plus the Unicode `P*` categories.
pub fn is_punctuation(c: char) -> bool {
    if c.is_ascii() {
        return c.is_ascii_punctuation();
    }
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Splits at whitespace (dropped) and around punctuation (each punctuation
/// character becomes its own token).
pub fn pre_tokenize(text: &str) -> Vec<PreToken> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut start = 0;

    let flush = |current: &mut String, start: usize, end: usize, out: &mut Vec<PreToken>| {
        if !current.is_empty() {
            out.push(PreToken {
                text: std::mem::take(current),
                char_start: start,
                char_end: end,
            });
        }
    };

    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            flush(&mut current, start, i, &mut out);
        } else if is_punctuation(c) {
            flush(&mut current, start, i, &mut out);
            out.push(PreToken {
                text: c.to_string(),
                char_start: i,
                char_end: i + 1,
            });
        } else {
            if current.is_empty() {
                start = i;
            }
            current.push(c);
        }
    }
    let n = text.chars().count();
    flush(&mut current, start, n, &mut out);
    out
}
