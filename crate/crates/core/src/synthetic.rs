//! Seeded copy-task corpus: every entity word type has one fixed tag, so a
//! tagger that memorises the lexicon scores perfectly. Filler words are
//! partly out of vocabulary and split into several sub-tokens.

use std::collections::BTreeSet;
use std::io::Write;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::tagscheme::TagSet;
use crate::vocab::{Vocabulary, SPECIAL_TOKENS};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub classes: Vec<String>,
    pub train_documents: usize,
    pub test_documents: usize,
    /// Word types per class for the first and the following entity tokens.
    pub words_per_tag: usize,
    pub filler_words: usize,
    /// Share of filler word types kept out of the vocabulary.
    pub oov_filler_fraction: f64,
    pub min_words: usize,
    pub max_words: usize,
    /// Probability that an entity starts at a given position.
    pub entity_rate: f64,
    pub max_entity_words: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            classes: ["PER", "ORG", "LOC"].map(String::from).to_vec(),
            train_documents: 500,
            test_documents: 200,
            words_per_tag: 12,
            filler_words: 60,
            oov_filler_fraction: 0.3,
            min_words: 5,
            max_words: 24,
            entity_rate: 0.2,
            max_entity_words: 3,
            seed: 20200316,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelledDocument {
    pub id: String,
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub vocab: Vocabulary,
    pub tagset: TagSet,
    pub train: Vec<LabelledDocument>,
    pub test: Vec<LabelledDocument>,
}

const ONSETS: [&str; 14] = ["b", "c", "d", "f", "g", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

fn syllable(rng: &mut impl Rng) -> String {
    format!("{}{}", ONSETS.choose(rng).unwrap(), VOWELS.choose(rng).unwrap())
}

fn fresh_word(rng: &mut impl Rng, syllables: usize, taken: &mut BTreeSet<String>) -> String {
    loop {
        let w: String = (0..syllables).map(|_| syllable(rng)).collect();
        // no word may be a prefix of another, so greedy matching never
        // confuses an entity word with the start of a filler
        if !taken.iter().any(|t| t.starts_with(&w) || w.starts_with(t.as_str())) {
            taken.insert(w.clone());
            return w;
        }
    }
}

fn capitalise(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut taken = BTreeSet::new();
    let tagset = TagSet::new(cfg.classes.iter().cloned()).expect("distinct classes");

    // lexicons[c] = (begin words, inside words)
    let lexicons: Vec<(Vec<String>, Vec<String>)> = cfg
        .classes
        .iter()
        .map(|_| {
            let mut lex = || -> Vec<String> {
                (0..cfg.words_per_tag)
                    .map(|_| capitalise(&fresh_word(&mut rng, 3, &mut taken)))
                    .collect()
            };
            (lex(), lex())
        })
        .collect();
    let fillers: Vec<String> = (0..cfg.filler_words)
        .map(|_| fresh_word(&mut rng, 2, &mut taken))
        .collect();
    let n_oov = (cfg.filler_words as f64 * cfg.oov_filler_fraction).round() as usize;
    let punctuation = [".", ","];

    let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
    for (b, i) in &lexicons {
        tokens.extend(b.iter().cloned());
        tokens.extend(i.iter().cloned());
    }
    tokens.extend(fillers[n_oov..].iter().cloned());
    tokens.extend(punctuation.iter().map(|s| s.to_string()));
    let mut pieces = BTreeSet::new();
    for w in &fillers[..n_oov] {
        // first syllable as a word start, the rest as continuations
        let (head, tail) = w.split_at(2);
        pieces.insert(head.to_string());
        for s in tail.as_bytes().chunks(2) {
            pieces.insert(format!("##{}", std::str::from_utf8(s).unwrap()));
        }
    }
    for p in pieces {
        if !tokens.contains(&p) {
            tokens.push(p);
        }
    }
    let vocab = Vocabulary::new(tokens).expect("generated vocabulary is valid");

    let document = |rng: &mut ChaCha8Rng, id: String| {
        let len = rng.random_range(cfg.min_words..=cfg.max_words);
        let mut toks = Vec::with_capacity(len + 2);
        let mut tags = Vec::with_capacity(len + 2);
        while toks.len() < len {
            if rng.random_bool(cfg.entity_rate) {
                let c = rng.random_range(0..cfg.classes.len());
                let (b, i) = &lexicons[c];
                toks.push(b.choose(rng).unwrap().clone());
                tags.push(format!("B-{}", cfg.classes[c]));
                let extra = rng.random_range(0..cfg.max_entity_words);
                for _ in 0..extra {
                    toks.push(i.choose(rng).unwrap().clone());
                    tags.push(format!("I-{}", cfg.classes[c]));
                }
            } else {
                toks.push(fillers.choose(rng).unwrap().clone());
                tags.push("O".into());
            }
            if rng.random_bool(0.1) {
                toks.push(punctuation.choose(rng).unwrap().to_string());
                tags.push("O".into());
            }
        }
        toks.push(".".into());
        tags.push("O".into());
        LabelledDocument { id, tokens: toks, tags }
    };
    let train = (0..cfg.train_documents)
        .map(|i| document(&mut rng, format!("train-{i}")))
        .collect();
    let test = (0..cfg.test_documents)
        .map(|i| document(&mut rng, format!("test-{i}")))
        .collect();
    SyntheticCorpus {
        vocab,
        tagset,
        train,
        test,
    }
}

/// `token<TAB>tag` lines, blank line after each document.
pub fn write_conll(mut out: impl Write, docs: &[LabelledDocument]) -> std::io::Result<()> {
    for d in docs {
        for (t, g) in d.tokens.iter().zip(&d.tags) {
            writeln!(out, "{t}\t{g}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
