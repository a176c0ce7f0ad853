//! Subword vocabulary, pre-tokenization and WordPiece segmentation.
//!
//! The vocabulary file format is the usual WordPiece one: UTF-8 text, one
//! token per line, the zero-based line number being the token id.

mod convert;
mod pretokenize;
mod wordpiece;

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

pub use convert::{convert_sentencepiece_vocab, default_punctuation_set, Conversion, WORD_BOUNDARY};
pub use pretokenize::{is_punctuation, pre_tokenize, PreToken};
pub use wordpiece::{
    tokenize, wordpiece_tokenize, wordpiece_tokenize_with, Normalization, SubToken,
    TokenizedDocument, TokenizerConfig,
};

use crate::error::{Error, Result};

pub const CONTINUATION_PREFIX: &str = "##";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
pub const SPECIAL_TOKENS: [&str; 4] = [UNK, CLS, SEP, MASK];

pub type TokenId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpecialIds {
    pub cls: TokenId,
    pub sep: TokenId,
    pub mask: TokenId,
    pub unk: TokenId,
}

/// Ordered subword inventory; a token's id is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    special: SpecialIds,
}

impl Vocabulary {
    /// Builds a vocabulary, rejecting duplicate tokens and vocabularies that
    /// lack any of the four special tokens.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate() {
            if tok.is_empty() {
                return Err(Error::Vocab(format!("empty token at id {id}")));
            }
            if index.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::Vocab(format!("duplicate token {tok:?} at id {id}")));
            }
        }
        let lookup = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Vocab(format!("missing special token {name}")))
        };
        let special = SpecialIds {
            cls: lookup(CLS)?,
            sep: lookup(SEP)?,
            mask: lookup(MASK)?,
            unk: lookup(UNK)?,
        };
        Ok(Vocabulary {
            tokens,
            index,
            special,
        })
    }

    /// Reads a one-token-per-line vocabulary. Trailing `\r` is stripped; an
    /// empty final line is ignored.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut tokens = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::parse(lineno + 1, e.to_string()))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.is_empty() {
                return Err(Error::parse(lineno + 1, "empty vocabulary line"));
            }
            tokens.push(line.to_string());
        }
        Vocabulary::new(tokens)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Vocabulary::from_reader(std::io::BufReader::new(file))
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for tok in &self.tokens {
            writeln!(out, "{tok}")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn special_ids(&self) -> SpecialIds {
        self.special
    }

    pub fn unk_id(&self) -> TokenId {
        self.special.unk
    }

    pub fn is_special(&self, token: &str) -> bool {
        SPECIAL_TOKENS.contains(&token)
    }

    /// Checks the composition rules a converted vocabulary satisfies: each
    /// non-special token is a single punctuation character, a `##`
    /// continuation, or starts with a word-initial character, and never mixes
    /// punctuation with other characters. Returns one message per violation.
    ///
    /// Not enforced by [`Vocabulary::new`]: released BERT vocabularies carry
    /// `[PAD]` and `[unusedN]` entries that break these rules.
    pub fn composition_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (id, tok) in self.tokens.iter().enumerate() {
            if self.is_special(tok) {
                continue;
            }
            let body = tok.strip_prefix(CONTINUATION_PREFIX).unwrap_or(tok);
            if body.is_empty() {
                out.push(format!("id {id}: bare continuation prefix"));
                continue;
            }
            if body.chars().any(char::is_whitespace) {
                out.push(format!("id {id}: {tok:?} contains whitespace"));
            }
            let punct = body.chars().filter(|&c| is_punctuation(c)).count();
            let total = body.chars().count();
            if punct > 0 {
                let single_punct = punct == 1 && total == 1 && body.len() == tok.len();
                if !single_punct {
                    out.push(format!("id {id}: {tok:?} mixes punctuation with other characters"));
                }
            }
        }
        for name in SPECIAL_TOKENS {
            let count = self.tokens.iter().filter(|t| *t == name).count();
            if count != 1 {
                out.push(format!("special token {name} present {count} times"));
            }
        }
        out
    }
}
