//! Structured sequence labelling toolkit: WordPiece tokenization, windowed
//! document inference, a linear-chain CRF, IOB2 handling, HAREM corpus
//! preprocessing and CoNLL-style entity scoring.

pub mod conll;
pub mod crf;
pub mod harem;
pub mod error;
pub mod eval;
pub mod matrix;
pub mod synthetic;
pub mod tagger;
pub mod tagscheme;
pub mod vocab;
pub mod windowing;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use tagger::{Head, TaggerModel, TrainConfig};
pub use tagscheme::{Entity, TagSequence, TagSet};
pub use vocab::{PreToken, TokenizedDocument, Vocabulary};
pub use windowing::{Span, SpanConfig};
