//! End-to-end tagger: emission scores per pre-token (from the toy encoder or
//! an external file), a CRF or softmax head, windowed inference with
//! max-context merging, and training.

mod checkpoint;
mod encoder;
mod external;
mod schedule;
mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::{CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use encoder::{EncoderGrads, TrainableEncoder};
pub use external::ExternalEmissions;
pub use schedule::lr_schedule;
pub use train::{train, train_with_dev, TrainReport};

use crate::crf::{viterbi_decode, TransitionMatrix};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tagscheme::{decode, filter_invalid, Entity, TagSequence, TagSet};
use crate::vocab::{pre_tokenize, wordpiece_tokenize_with, PreToken, TokenizedDocument, TokenizerConfig, Vocabulary};
use crate::windowing::{merge_predictions, plan_spans, Span, SpanConfig};

/// Seed stream used for parameter initialisation.
pub(crate) const INIT_STREAM: u64 = 1;
/// Seed stream used for the per-epoch shuffle.
pub(crate) const SHUFFLE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Crf,
    Softmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmissionModel {
    Trainable(TrainableEncoder),
    /// Scores come with each document; only the head is trained.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate for the embedding table.
    pub lr_encoder: f64,
    /// Learning rate for the projection, its bias and the transitions.
    pub lr_head: f64,
    pub warmup_fraction: f64,
    /// Decoupled decay applied to embeddings and projection weights.
    pub weight_decay: f64,
    pub momentum: f64,
    pub o_tag_bias_init: f64,
    /// Weight of `O` positions in the softmax cross entropy.
    pub o_tag_loss_weight: f64,
    pub head: Head,
    pub embedding_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 16,
            lr_encoder: 5e-5,
            lr_head: 1e-3,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            momentum: 0.0,
            o_tag_bias_init: 6.0,
            o_tag_loss_weight: 0.01,
            head: Head::Crf,
            embedding_dim: 32,
            seed: 13,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction {} outside [0, 1]", self.warmup_fraction));
        }
        if self.lr_encoder <= 0.0 || self.lr_head <= 0.0 {
            return bad("learning rates must be positive".into());
        }
        if self.epochs == 0 || self.batch_size == 0 || self.embedding_dim == 0 {
            return bad("epochs, batch_size and embedding_dim must be positive".into());
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.momentum) || self.o_tag_loss_weight < 0.0 {
            return bad("weight_decay, momentum or o_tag_loss_weight out of range".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub vocab: Vocabulary,
    pub tagset: TagSet,
    pub span: SpanConfig,
    pub tokenizer: TokenizerConfig,
    pub emission: EmissionModel,
    /// Present iff the head is a CRF.
    pub transitions: Option<TransitionMatrix>,
}

/// A document ready for tagging: its tokenization, an identifier, and the
/// external scores when the model uses them.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentInput {
    pub id: String,
    pub tokens: TokenizedDocument,
    pub external: Option<Matrix>,
}

/// A labelled document for training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingDocument {
    pub input: DocumentInput,
    /// Word-level gold tags, one per pre-token.
    pub gold: TagSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Merged per-word tags before IOB2 repair.
    pub raw_tags: TagSequence,
    pub tags: TagSequence,
    /// Word-level entity spans.
    pub entities: Vec<Entity>,
}

impl TaggerModel {
    /// Fresh model with the toy encoder. The `O` bias starts at
    /// `cfg.o_tag_bias_init`; transitions start at zero.
    pub fn init_trainable(vocab: Vocabulary, tagset: TagSet, span: SpanConfig, cfg: &TrainConfig) -> Result<Self> {
        span.validate()?;
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(INIT_STREAM);
        let mut enc = TrainableEncoder::init(vocab.len(), cfg.embedding_dim, tagset.len(), &mut rng);
        enc.bias[tagset.outside()] = cfg.o_tag_bias_init;
        let transitions = (cfg.head == Head::Crf).then(|| TransitionMatrix::zeros(tagset.len()));
        Ok(TaggerModel {
            vocab,
            tagset,
            span,
            tokenizer: TokenizerConfig::default(),
            emission: EmissionModel::Trainable(enc),
            transitions,
        })
    }

    /// Model whose emissions come from a file; only a CRF head has
    /// parameters to train.
    pub fn init_external(vocab: Vocabulary, tagset: TagSet, span: SpanConfig, head: Head) -> Result<Self> {
        span.validate()?;
        let transitions = (head == Head::Crf).then(|| TransitionMatrix::zeros(tagset.len()));
        Ok(TaggerModel {
            vocab,
            tagset,
            span,
            tokenizer: TokenizerConfig::default(),
            emission: EmissionModel::External,
            transitions,
        })
    }

    pub fn head(&self) -> Head {
        if self.transitions.is_some() {
            Head::Crf
        } else {
            Head::Softmax
        }
    }

    pub fn tokenize(&self, text: &str) -> TokenizedDocument {
        self.tokenize_pre_tokens(&pre_tokenize(text))
    }

    pub fn tokenize_pre_tokens(&self, pre_tokens: &[PreToken]) -> TokenizedDocument {
        wordpiece_tokenize_with(&self.vocab, pre_tokens, &self.tokenizer)
    }

    /// Input from already-split words, as in a column file. Words are not
    /// split further; character offsets assume single spaces between them.
    pub fn input_from_words<S: AsRef<str>>(&self, id: impl Into<String>, words: &[S]) -> DocumentInput {
        let mut pos = 0;
        let pre: Vec<PreToken> = words
            .iter()
            .map(|w| {
                let w = w.as_ref();
                let len = w.chars().count();
                let t = PreToken {
                    text: w.to_string(),
                    char_start: pos,
                    char_end: pos + len,
                };
                pos += len + 1;
                t
            })
            .collect();
        DocumentInput {
            id: id.into(),
            tokens: self.tokenize_pre_tokens(&pre),
            external: None,
        }
    }

    /// Training document from words and their tag names.
    pub fn training_document<S: AsRef<str>, T: AsRef<str>>(
        &self,
        id: impl Into<String>,
        words: &[S],
        tags: &[T],
    ) -> Result<TrainingDocument> {
        let input = self.input_from_words(id, words);
        if tags.len() != words.len() {
            return Err(Error::Misaligned {
                doc: input.id,
                reason: format!("{} tags for {} words", tags.len(), words.len()),
            });
        }
        let gold = self.tagset.parse_sequence(tags)?;
        Ok(TrainingDocument { input, gold })
    }

    pub fn check(&self) -> Result<()> {
        self.span.validate()?;
        let k = self.tagset.len();
        if let Some(t) = &self.transitions {
            if t.num_tags() != k {
                return Err(Error::Checkpoint(format!("transitions cover {} tags, tag set has {k}", t.num_tags())));
            }
        }
        if let EmissionModel::Trainable(enc) = &self.emission {
            if enc.num_tags() != k || enc.bias.len() != k {
                return Err(Error::Checkpoint(format!("projection width {} does not match {k} tags", enc.num_tags())));
            }
            if enc.vocab_size() != self.vocab.len() {
                return Err(Error::Checkpoint(format!(
                    "embedding table has {} rows, vocabulary has {} tokens",
                    enc.vocab_size(),
                    self.vocab.len()
                )));
            }
        }
        Ok(())
    }

    fn check_input(&self, doc: &DocumentInput) -> Result<()> {
        if let Some(bad) = doc.tokens.sub_tokens.iter().find(|s| s.id as usize >= self.vocab.len()) {
            return Err(Error::Misaligned {
                doc: doc.id.clone(),
                reason: format!("sub-token id {} outside the vocabulary", bad.id),
            });
        }
        match (&self.emission, &doc.external) {
            (EmissionModel::External, None) => Err(Error::Misaligned {
                doc: doc.id.clone(),
                reason: "model expects external emission scores".into(),
            }),
            (EmissionModel::External, Some(m)) => {
                if m.rows() != doc.tokens.num_words() || m.cols() != self.tagset.len() {
                    return Err(Error::Misaligned {
                        doc: doc.id.clone(),
                        reason: format!(
                            "external scores are {}x{}, document has {} pre-tokens and the model {} tags",
                            m.rows(),
                            m.cols(),
                            doc.tokens.num_words(),
                            self.tagset.len()
                        ),
                    });
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Decodes word-level emissions with this model's head.
    pub fn decode_emissions(&self, emissions: &Matrix) -> Result<TagSequence> {
        match &self.transitions {
            Some(a) => Ok(viterbi_decode(a, emissions)?.0),
            None => Ok((0..emissions.rows())
                .map(|i| argmax(emissions.row(i)))
                .collect()),
        }
    }

    /// Windowed inference: split into spans, decode each span, merge by
    /// max context, repair invalid IOB2 transitions, extract entities.
    pub fn predict(&self, doc: &DocumentInput) -> Result<Prediction> {
        self.check_input(doc)?;
        let n_sub = doc.tokens.num_sub_tokens();
        if n_sub == 0 {
            return Ok(Prediction {
                raw_tags: Vec::new(),
                tags: Vec::new(),
                entities: Vec::new(),
            });
        }
        let spans = plan_spans(n_sub, &self.span);
        let outside = self.tagset.outside();
        let mut per_span = Vec::with_capacity(spans.len());
        for span in &spans {
            // continuation positions are never read after merging
            let mut tags = vec![outside; span.len()];
            let words = doc.tokens.words_in(span.start, span.end);
            if !words.is_empty() {
                let emissions = emissions_for_span(self, doc, span)?;
                let decoded = self.decode_emissions(&emissions)?;
                let firsts = doc.tokens.sub_tokens[span.start..span.end]
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.is_first)
                    .map(|(i, _)| i);
                for (pos, tag) in firsts.zip(decoded) {
                    tags[pos] = tag;
                }
            }
            per_span.push(tags);
        }
        let merged = merge_predictions(&spans, &per_span)?;
        let raw_tags: TagSequence = doc.tokens.first_positions().into_iter().map(|i| merged[i]).collect();
        let tags = filter_invalid(&raw_tags, &self.tagset);
        let entities = decode(&tags, &self.tagset)?;
        Ok(Prediction {
            raw_tags,
            tags,
            entities,
        })
    }

    /// Predicts every document; parallel across documents, results in input
    /// order.
    pub fn predict_all(&self, docs: &[DocumentInput]) -> Result<Vec<Prediction>> {
        docs.par_iter().map(|d| self.predict(d)).collect()
    }

    pub fn predict_text(&self, text: &str) -> Result<Prediction> {
        self.predict(&DocumentInput {
            id: String::new(),
            tokens: self.tokenize(text),
            external: None,
        })
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Word-level emission rows for one span: one row per pre-token whose first
/// sub-token lies in the span, continuation pieces dropped.
pub fn emissions_for_span(model: &TaggerModel, doc: &DocumentInput, span: &Span) -> Result<Matrix> {
    if span.end > doc.tokens.num_sub_tokens() || span.start >= span.end {
        return Err(Error::shape(format!(
            "span [{}, {}) outside document {:?} of {} sub-tokens",
            span.start,
            span.end,
            doc.id,
            doc.tokens.num_sub_tokens()
        )));
    }
    let words = doc.tokens.words_in(span.start, span.end);
    if words.is_empty() {
        return Err(Error::Misaligned {
            doc: doc.id.clone(),
            reason: format!("span [{}, {}) contains no pre-token start", span.start, span.end),
        });
    }
    match &model.emission {
        EmissionModel::Trainable(enc) => {
            let ids: Vec<_> = doc.tokens.sub_tokens[span.start..span.end]
                .iter()
                .filter(|s| s.is_first)
                .map(|s| s.id)
                .collect();
            Ok(enc.forward(&ids))
        }
        EmissionModel::External => {
            let m = doc.external.as_ref().ok_or_else(|| Error::Misaligned {
                doc: doc.id.clone(),
                reason: "model expects external emission scores".into(),
            })?;
            if m.rows() != doc.tokens.num_words() {
                return Err(Error::Misaligned {
                    doc: doc.id.clone(),
                    reason: format!("{} score rows for {} pre-tokens", m.rows(), doc.tokens.num_words()),
                });
            }
            let rows: Vec<Vec<f64>> = words.map(|w| m.row(w).to_vec()).collect();
            Ok(Matrix::from_rows(&rows).expect("rows share a width"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::tokenize;

    pub(crate) fn small_vocab() -> Vocabulary {
        let toks = ["[UNK]", "[CLS]", "[SEP]", "[MASK]", "casa", "##mente", "de", "Ana", "Lisboa", "."];
        Vocabulary::new(toks.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn model(head: Head, span: SpanConfig) -> TaggerModel {
        let cfg = TrainConfig {
            head,
            embedding_dim: 4,
            ..Default::default()
        };
        TaggerModel::init_trainable(small_vocab(), TagSet::new(["PER", "LOC"]).unwrap(), span, &cfg).unwrap()
    }

    fn input(v: &Vocabulary, text: &str) -> DocumentInput {
        DocumentInput {
            id: "d".into(),
            tokens: tokenize(v, text),
            external: None,
        }
    }

    #[test]
    fn masking_keeps_one_row_per_word() {
        let m = model(Head::Crf, SpanConfig::default());
        let doc = input(&m.vocab, "casamente");
        let span = Span { start: 0, end: 2, max_context: 0..2 };
        assert_eq!(emissions_for_span(&m, &doc, &span).unwrap().rows(), 1);

        let doc = input(&m.vocab, "casamente de Ana casamente Lisboa");
        assert_eq!(doc.tokens.num_sub_tokens(), 7);
        let span = Span { start: 0, end: 7, max_context: 0..7 };
        assert_eq!(emissions_for_span(&m, &doc, &span).unwrap().rows(), 5);

        let cont_only = Span { start: 1, end: 2, max_context: 1..2 };
        assert!(emissions_for_span(&m, &doc, &cont_only).is_err());
    }

    #[test]
    fn external_rows_verbatim() {
        let v = small_vocab();
        let ts = TagSet::new(["PER"]).unwrap();
        let m = TaggerModel::init_external(v.clone(), ts, SpanConfig::new(3, 1).unwrap(), Head::Crf).unwrap();
        let file = "#tags\t3\tO\tB-PER\tI-PER\nd\t3\t1 2 3 4 5 6 7 8 9\n";
        let ext = ExternalEmissions::read(file.as_bytes()).unwrap();
        let mut doc = input(&v, "casamente de Ana");
        doc.external = ext.get("d").cloned();
        // sub-tokens: casa ##mente de Ana; span [1,4) holds words 1 and 2
        let span = Span { start: 1, end: 4, max_context: 1..4 };
        let e = emissions_for_span(&m, &doc, &span).unwrap();
        assert_eq!(e.as_slice(), [4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let p = m.predict(&doc).unwrap();
        assert_eq!(p.tags.len(), 3);
    }

    #[test]
    fn prediction_length_matches_words() {
        for head in [Head::Crf, Head::Softmax] {
            let m = model(head, SpanConfig::new(3, 1).unwrap());
            let doc = input(&m.vocab, "casamente de Ana casamente Lisboa . casamente");
            let p = m.predict(&doc).unwrap();
            assert_eq!(p.tags.len(), doc.tokens.num_words());
            assert!(crate::tagscheme::is_valid(&p.tags, &m.tagset));
        }
        let m = model(Head::Crf, SpanConfig::default());
        let p = m.predict(&input(&m.vocab, "")).unwrap();
        assert!(p.tags.is_empty() && p.entities.is_empty());
    }

    #[test]
    fn fresh_model_prefers_outside() {
        let m = model(Head::Softmax, SpanConfig::default());
        let p = m.predict_text("Ana de Lisboa").unwrap();
        assert!(p.raw_tags.iter().all(|&t| t == 0));
    }

    #[test]
    fn external_model_requires_scores() {
        let v = small_vocab();
        let m = TaggerModel::init_external(v.clone(), TagSet::new(["PER"]).unwrap(), SpanConfig::default(), Head::Crf)
            .unwrap();
        assert!(matches!(m.predict(&input(&v, "Ana")), Err(Error::Misaligned { .. })));
    }
}
