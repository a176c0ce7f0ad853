//! Model checkpoints are a single JSON object:
//!
//! ```json
//! {
//!   "format": "seqtag-model",
//!   "version": 1,
//!   "vocab": ["[UNK]", "[CLS]", ...],
//!   "tagset": ["PER", "LOC", ...],
//!   "span": {"max_len": 512, "stride": 128},
//!   "tokenizer": {"max_word_chars": 100, "normalization": "none"},
//!   "emission": {"kind": "trainable", "embeddings": {...}, "projection": {...}, "bias": [...]},
//!   "transitions": {"num_tags": 21, "scores": {"rows": 23, "cols": 23, "data": [...]}}
//! }
//! ```
//!
//! `emission` is `{"kind": "external"}` when scores come from a file, and
//! `transitions` is `null` for a softmax head. Matrices are row-major.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EmissionModel, TaggerModel};
use crate::crf::TransitionMatrix;
use crate::error::{Error, Result};
use crate::tagscheme::TagSet;
use crate::vocab::{TokenizerConfig, Vocabulary};
use crate::windowing::SpanConfig;

pub const CHECKPOINT_FORMAT: &str = "seqtag-model";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    vocab: Vec<String>,
    tagset: TagSet,
    span: SpanConfig,
    tokenizer: TokenizerConfig,
    emission: EmissionModel,
    transitions: Option<TransitionMatrix>,
}

impl TaggerModel {
    pub fn write_checkpoint(&self, out: impl Write) -> Result<()> {
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            vocab: self.vocab.tokens().to_vec(),
            tagset: self.tagset.clone(),
            span: self.span,
            tokenizer: self.tokenizer,
            emission: self.emission.clone(),
            transitions: self.transitions.clone(),
        };
        serde_json::to_writer(out, &ckpt)?;
        Ok(())
    }

    pub fn read_checkpoint(reader: impl Read) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(reader)?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(CHECKPOINT_FORMAT) => {}
            other => return Err(Error::Checkpoint(format!("not a model checkpoint (format {other:?})"))),
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            other => return Err(Error::Checkpoint(format!("unsupported checkpoint version {other:?}"))),
        }
        let ckpt: Checkpoint = serde_json::from_value(value)?;
        let transitions = match ckpt.transitions {
            Some(t) => Some(TransitionMatrix::from_matrix(t.matrix().clone())?),
            None => None,
        };
        let model = TaggerModel {
            vocab: Vocabulary::new(ckpt.vocab)?,
            tagset: ckpt.tagset,
            span: ckpt.span,
            tokenizer: ckpt.tokenizer,
            emission: ckpt.emission,
            transitions,
        };
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_checkpoint(&mut out)?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        TaggerModel::read_checkpoint(std::io::BufReader::new(file))
    }
}
