use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::{pre_tokenize, PreToken, TokenId, Vocabulary, CONTINUATION_PREFIX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    None,
    /// NFC is applied to each pre-token before vocabulary lookup only;
    /// recorded offsets still index the source text.
    Nfc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    /// Pre-tokens longer than this many characters map to `[UNK]`.
    pub max_word_chars: usize,
    pub normalization: Normalization,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            max_word_chars: 100,
            normalization: Normalization::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubToken {
    pub id: TokenId,
    /// Index of the owning pre-token.
    pub word: usize,
    pub is_first: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub pre_tokens: Vec<PreToken>,
    pub sub_tokens: Vec<SubToken>,
}

impl TokenizedDocument {
    pub fn num_words(&self) -> usize {
        self.pre_tokens.len()
    }

    pub fn num_sub_tokens(&self) -> usize {
        self.sub_tokens.len()
    }

    /// Sub-token index of each pre-token's first piece, in word order.
    pub fn first_positions(&self) -> Vec<usize> {
        self.sub_tokens
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_first)
            .map(|(i, _)| i)
            .collect()
    }

    /// Word indices whose first sub-token lies in `start..end`.
    pub fn words_in(&self, start: usize, end: usize) -> std::ops::Range<usize> {
        let slice = &self.sub_tokens[start..end];
        let mut firsts = slice.iter().filter(|s| s.is_first).map(|s| s.word);
        match firsts.next() {
            None => 0..0,
            Some(first) => {
                let last = firsts.next_back().unwrap_or(first);
                first..last + 1
            }
        }
    }
}

pub fn wordpiece_tokenize(vocab: &Vocabulary, pre_tokens: &[PreToken]) -> TokenizedDocument {
    wordpiece_tokenize_with(vocab, pre_tokens, &TokenizerConfig::default())
}

/// Greedy longest-match-first segmentation of every pre-token. A pre-token
/// with no complete segmentation becomes a single `[UNK]`.
pub fn wordpiece_tokenize_with(
    vocab: &Vocabulary,
    pre_tokens: &[PreToken],
    config: &TokenizerConfig,
) -> TokenizedDocument {
    let mut sub_tokens = Vec::with_capacity(pre_tokens.len());
    let mut buf = String::new();
    for (word, pt) in pre_tokens.iter().enumerate() {
        let text: std::borrow::Cow<str> = match config.normalization {
            Normalization::None => pt.text.as_str().into(),
            Normalization::Nfc => pt.text.nfc().collect::<String>().into(),
        };
        let pieces = segment(vocab, &text, config.max_word_chars, &mut buf)
            .unwrap_or_else(|| vec![vocab.unk_id()]);
        sub_tokens.extend(pieces.into_iter().enumerate().map(|(k, id)| SubToken {
            id,
            word,
            is_first: k == 0,
        }));
    }
    TokenizedDocument {
        pre_tokens: pre_tokens.to_vec(),
        sub_tokens,
    }
}

fn segment(vocab: &Vocabulary, word: &str, max_chars: usize, buf: &mut String) -> Option<Vec<TokenId>> {
    // byte offsets of char boundaries, including the end
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let n_chars = bounds.len() - 1;
    if n_chars > max_chars {
        return None;
    }
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < n_chars {
        let mut found = None;
        for end in (start + 1..=n_chars).rev() {
            buf.clear();
            if start > 0 {
                buf.push_str(CONTINUATION_PREFIX);
            }
            buf.push_str(&word[bounds[start]..bounds[end]]);
            if let Some(id) = vocab.id(buf) {
                found = Some((id, end));
                break;
            }
        }
        let (id, end) = found?;
        pieces.push(id);
        start = end;
    }
    Some(pieces)
}

/// Pre-tokenizes and segments `text` with the default configuration.
pub fn tokenize(vocab: &Vocabulary, text: &str) -> TokenizedDocument {
    wordpiece_tokenize(vocab, &pre_tokenize(text))
}
