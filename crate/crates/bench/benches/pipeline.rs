use criterion::{criterion_group, criterion_main, Criterion};

use seqtag_core::synthetic::{generate, SyntheticConfig};
use seqtag_core::tagger::{TaggerModel, TrainConfig};
use seqtag_core::vocab::{pre_tokenize, wordpiece_tokenize};
use seqtag_core::windowing::{plan_spans, SpanConfig};

fn bench_pipeline(c: &mut Criterion) {
    let corpus = generate(&SyntheticConfig::default());
    let text: String = corpus
        .train
        .iter()
        .take(100)
        .map(|d| d.tokens.join(" "))
        .collect::<Vec<_>>()
        .join(" ");

    c.bench_function("tokenize_100_docs", |b| {
        b.iter(|| wordpiece_tokenize(&corpus.vocab, &pre_tokenize(&text)))
    });

    let span = SpanConfig::default();
    c.bench_function("plan_spans_10k", |b| b.iter(|| plan_spans(10_000, &span)));

    let cfg = TrainConfig::default();
    let model = TaggerModel::init_trainable(corpus.vocab.clone(), corpus.tagset.clone(), SpanConfig::new(16, 8).unwrap(), &cfg)
        .unwrap();
    let inputs: Vec<_> = corpus.test.iter().map(|d| model.input_from_words(&d.id, &d.tokens)).collect();
    c.bench_function("predict_200_docs", |b| b.iter(|| model.predict_all(&inputs).unwrap()));
}

criterion_group!(benches, bench_pipeline);
criterion_main!(benches);
