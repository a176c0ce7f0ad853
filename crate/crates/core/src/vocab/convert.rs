use std::collections::{BTreeSet, HashSet};

use log::warn;

use super::{is_punctuation, Vocabulary, CONTINUATION_PREFIX, SPECIAL_TOKENS};

/// SentencePiece word-boundary marker, U+2581.
pub const WORD_BOUNDARY: char = '\u{2581}';

#[derive(Debug, Clone)]
pub struct Conversion {
    pub vocab: Vocabulary,
    /// `(input index, piece, reason)` for every piece that was skipped.
    pub rejected: Vec<(usize, String, String)>,
}

/// Punctuation characters from the Latin, general-punctuation, CJK-symbol and
/// full-width blocks, used when no reference vocabulary is supplied.
pub fn default_punctuation_set() -> BTreeSet<char> {
    let ranges = [
        0x0021..=0x007E,
        0x00A0..=0x00BF,
        0x2010..=0x205E,
        0x3000..=0x303F,
        0xFF00..=0xFF65,
    ];
    ranges
        .into_iter()
        .flatten()
        .filter_map(char::from_u32)
        .filter(|&c| is_punctuation(c))
        .collect()
}

/// Converts SentencePiece pieces into a WordPiece vocabulary.
///
/// Output order: the four special tokens, then the punctuation characters in
/// code-point order, then the units derived from each piece in input order,
/// keeping the first occurrence of duplicates. Each piece is split at
/// punctuation and whitespace, which are dropped. A unit is word-initial when
/// it carries the leading marker or follows a dropped separator inside the
/// piece; every other unit gets the `##` prefix.
pub fn convert_sentencepiece_vocab<S: AsRef<str>>(
    sp_tokens: &[S],
    punctuation: &BTreeSet<char>,
) -> Conversion {
    let mut tokens: Vec<String> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut push = |tok: String, tokens: &mut Vec<String>| {
        if seen.insert(tok.clone()) {
            tokens.push(tok);
        }
    };

    for s in SPECIAL_TOKENS {
        push(s.to_string(), &mut tokens);
    }
    for &c in punctuation {
        if is_punctuation(c) {
            push(c.to_string(), &mut tokens);
        } else {
            warn!("ignoring non-punctuation character {c:?} in punctuation set");
        }
    }

    let mut rejected = Vec::new();
    for (i, piece) in sp_tokens.iter().enumerate() {
        let piece = piece.as_ref();
        match derive_units(piece) {
            Ok(units) => {
                for u in units {
                    push(u, &mut tokens);
                }
            }
            Err(reason) => {
                warn!("skipping piece {i} {piece:?}: {reason}");
                rejected.push((i, piece.to_string(), reason));
            }
        }
    }

    let vocab = Vocabulary::new(tokens).expect("special tokens are inserted first and tokens are deduplicated");
    Conversion { vocab, rejected }
}

fn derive_units(piece: &str) -> Result<Vec<String>, String> {
    if piece.chars().skip(1).any(|c| c == WORD_BOUNDARY) {
        return Err("word-boundary marker not at piece start".to_string());
    }
    if SPECIAL_TOKENS.contains(&piece) {
        return Ok(Vec::new());
    }
    let (mut word_initial, body) = match piece.strip_prefix(WORD_BOUNDARY) {
        Some(rest) => (true, rest),
        None => (false, piece),
    };

    let mut units = Vec::new();
    let mut current = String::new();
    for c in body.chars() {
        if is_punctuation(c) || c.is_whitespace() {
            if !current.is_empty() {
                units.push(finish(&mut current, word_initial));
            }
            // text after a split point starts a new pre-token
            word_initial = true;
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        units.push(finish(&mut current, word_initial));
    }
    Ok(units)
}

fn finish(current: &mut String, word_initial: bool) -> String {
    let unit = std::mem::take(current);
    if word_initial {
        unit
    } else {
        format!("{CONTINUATION_PREFIX}{unit}")
    }
}
