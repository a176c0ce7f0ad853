use proptest::prelude::*;

use seqtag_core::crf::{log_partition, viterbi_decode, TransitionMatrix, FORBIDDEN};
use seqtag_core::harem::{parse_harem, resolve_document, Scenario};
use seqtag_core::tagger::{DocumentInput, Head, TaggerModel, TrainConfig};
use seqtag_core::tagscheme::{decode, encode, filter_invalid, is_valid, Entity, TagSet};
use seqtag_core::vocab::{
    convert_sentencepiece_vocab, default_punctuation_set, pre_tokenize, tokenize, Vocabulary, CONTINUATION_PREFIX,
    SPECIAL_TOKENS, WORD_BOUNDARY,
};
use seqtag_core::windowing::{merge_predictions, plan_spans, SpanConfig};
use seqtag_core::Matrix;

fn tagset(classes: usize) -> TagSet {
    TagSet::new((0..classes).map(|c| format!("C{c}"))).unwrap()
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn crf_case() -> impl Strategy<Value = (TransitionMatrix, Matrix)> {
    (1usize..5, 1usize..12).prop_flat_map(|(k, n)| {
        (matrix(k + 2, k + 2), matrix(n, k))
            .prop_map(|(a, p)| (TransitionMatrix::from_matrix(a).unwrap(), p))
    })
}

proptest! {
    #[test]
    fn max_context_partitions_document(doc_len in 0usize..3000, s in 1usize..600, d_frac in 0.0f64..=1.0) {
        let d = ((s as f64 * d_frac) as usize).clamp(1, s);
        let spans = plan_spans(doc_len, &SpanConfig::new(s, d).unwrap());
        let mut next = 0;
        for sp in &spans {
            prop_assert_eq!(sp.start % d, 0);
            prop_assert!(sp.len() <= s && sp.start < sp.end);
            prop_assert_eq!(sp.max_context.start, next);
            prop_assert!(sp.max_context.start >= sp.start && sp.max_context.end <= sp.end);
            next = sp.max_context.end;
        }
        prop_assert_eq!(next, doc_len);
        let ids: Vec<Vec<usize>> = spans.iter().map(|sp| sp.range().collect()).collect();
        prop_assert_eq!(merge_predictions(&spans, &ids).unwrap(), (0..doc_len).collect::<Vec<_>>());
    }

    #[test]
    fn filter_yields_valid_and_is_idempotent(classes in 1usize..=10, raw in prop::collection::vec(0usize..21, 0..60)) {
        let ts = tagset(classes);
        let tags: Vec<usize> = raw.into_iter().map(|t| t % ts.len()).collect();
        let f = filter_invalid(&tags, &ts);
        prop_assert!(is_valid(&f, &ts));
        prop_assert_eq!(filter_invalid(&f, &ts), f.clone());
        // only I- tags are rewritten, and only to O
        for (a, b) in tags.iter().zip(&f) {
            prop_assert!(a == b || *b == ts.outside());
        }
    }

    #[test]
    fn encode_decode_round_trip(classes in 1usize..=10, len in 0usize..40, picks in prop::collection::vec((0usize..40, 1usize..5, 0usize..10), 0..10)) {
        let ts = tagset(classes);
        let mut ents: Vec<Entity> = Vec::new();
        let mut sorted = picks;
        sorted.sort();
        for (start, width, class) in sorted {
            let end = (start + width).min(len);
            if start >= end || ents.last().is_some_and(|e| e.end > start) {
                continue;
            }
            ents.push(Entity::new(start, end, ts.classes()[class % classes].clone()));
        }
        let tags = encode(&ents, len, &ts).unwrap();
        prop_assert!(is_valid(&tags, &ts));
        prop_assert_eq!(filter_invalid(&tags, &ts), tags.clone());
        prop_assert_eq!(decode(&tags, &ts).unwrap(), ents);
    }

    #[test]
    fn emission_shift_moves_log_partition((a, p) in crf_case(), row in 0usize..12, c in -3.0f64..3.0) {
        let row = row % p.rows();
        let mut shifted = p.clone();
        for v in shifted.row_mut(row) {
            *v += c;
        }
        let z = log_partition(&a, &p).unwrap();
        let z2 = log_partition(&a, &shifted).unwrap();
        prop_assert!((z2 - z - c).abs() < 1e-9 * z.abs().max(1.0));
        prop_assert_eq!(viterbi_decode(&a, &p).unwrap().0, viterbi_decode(&a, &shifted).unwrap().0);
    }

    #[test]
    fn crf_with_forbidden_transitions_needs_no_filter(classes in 1usize..=4, scores in prop::collection::vec(-5.0f64..5.0, 1..200)) {
        let ts = tagset(classes);
        let k = ts.len();
        let mut a = TransitionMatrix::zeros(k);
        for to in 0..k {
            if !ts.allowed(None, to) {
                a.set(a.start(), to, FORBIDDEN);
            }
            for from in 0..k {
                if !ts.allowed(Some(from), to) {
                    a.set(from, to, FORBIDDEN);
                }
            }
        }
        let n = (scores.len() / k).max(1);
        let mut data = scores;
        data.resize(n * k, 0.0);
        let p = Matrix::from_vec(n, k, data).unwrap();
        let (path, _) = viterbi_decode(&a, &p).unwrap();
        prop_assert!(is_valid(&path, &ts));
        prop_assert_eq!(filter_invalid(&path, &ts), path);
    }

    #[test]
    fn converted_vocab_is_well_formed(pieces in prop::collection::vec("[▁]?[a-zç.,!?() ]{0,6}", 0..40)) {
        let conv = convert_sentencepiece_vocab(&pieces, &default_punctuation_set());
        let toks = conv.vocab.tokens();
        prop_assert_eq!(&toks[..4], &SPECIAL_TOKENS.map(String::from)[..]);
        for t in &toks[4..] {
            prop_assert!(!t.contains(WORD_BOUNDARY));
            prop_assert!(!t.chars().any(char::is_whitespace));
            prop_assert!(t != CONTINUATION_PREFIX && !t.is_empty());
        }
        for (_, piece, _) in &conv.rejected {
            prop_assert!(piece.chars().skip(1).any(|c| c == WORD_BOUNDARY));
        }
        // a clean word-initial piece survives as itself
        for p in &pieces {
            if let Some(w) = p.strip_prefix(WORD_BOUNDARY) {
                if !w.is_empty() && w.chars().all(|c| c.is_alphabetic()) {
                    prop_assert!(conv.vocab.contains(w));
                }
            }
        }
    }

    #[test]
    fn tokenizer_is_deterministic_and_covers_text(text in "[a-zA-Zçã0-9 .,;!?()\\-]{0,80}") {
        let vocab = Vocabulary::new(
            SPECIAL_TOKENS.iter().map(|s| s.to_string())
                .chain(["a", "b", "ab", "##a", "##b", "##c", ".", ","].map(String::from))
                .collect(),
        ).unwrap();
        let t1 = tokenize(&vocab, &text);
        prop_assert_eq!(&t1, &tokenize(&vocab, &text));
        let pre = pre_tokenize(&text);
        let chars: Vec<char> = text.chars().collect();
        let joined: String = pre.iter().map(|p| p.text.as_str()).collect();
        let no_ws: String = text.chars().filter(|c| !c.is_whitespace()).collect();
        prop_assert_eq!(joined, no_ws);
        for p in &pre {
            prop_assert_eq!(chars[p.char_start..p.char_end].iter().collect::<String>(), p.text.clone());
        }
        prop_assert_eq!(t1.first_positions().len(), pre.len());
    }

    #[test]
    fn one_prediction_per_word(words in prop::collection::vec("[a-e]{1,5}", 0..60), s in 2usize..20, head_crf in any::<bool>()) {
        let vocab = Vocabulary::new(
            SPECIAL_TOKENS.iter().map(|s| s.to_string())
                .chain(["a", "b", "c", "##a", "##b", "##c", "##d", "##e"].map(String::from))
                .collect(),
        ).unwrap();
        let head = if head_crf { Head::Crf } else { Head::Softmax };
        let cfg = TrainConfig { head, embedding_dim: 4, ..Default::default() };
        let short = TaggerModel::init_trainable(vocab.clone(), tagset(2), SpanConfig::new(s, (s / 2).max(1)).unwrap(), &cfg).unwrap();
        let mut whole = short.clone();
        whole.span = SpanConfig::new(10_000, 128).unwrap();
        let input: DocumentInput = short.input_from_words("d", &words);
        let p = short.predict(&input).unwrap();
        prop_assert_eq!(p.tags.len(), words.len());
        prop_assert!(is_valid(&p.tags, &short.tagset));
        if input.tokens.num_sub_tokens() <= s {
            prop_assert_eq!(p, whole.predict(&input).unwrap());
        }
    }
}

#[test]
fn selective_entities_subset_of_total() {
    let xml = r#"<colHAREM>
<DOC DOCID="a"><P><EM CATEG="PESSOA|ORGANIZACAO">Ana</EM> foi a <EM CATEG="LOCAL">Lisboa</EM> em <EM CATEG="TEMPO">1990</EM>.</P>
<P><ALT><EM CATEG="OBRA">Os Lusíadas</EM>|Os <EM CATEG="ABSTRACCAO">Lusíadas</EM></ALT> e <EM CATEG="COISA|VALOR">mil</EM></P></DOC>
<DOC DOCID="b"><P><EM CATEG="ACONTECIMENTO">Expo</EM> <EM CATEG="OUTRO">x</EM></P></DOC>
</colHAREM>"#;
    for doc in parse_harem(xml.as_bytes()).unwrap() {
        let sel = resolve_document(&doc, &Scenario::selective());
        let tot = resolve_document(&doc, &Scenario::total());
        assert_eq!(sel.text, tot.text);
        for e in &sel.entities {
            assert!(tot.entities.iter().any(|t| t.start == e.start && t.end == e.end), "{e:?}");
        }
        assert_eq!(resolve_document(&doc, &Scenario::total()), tot);
    }
}
