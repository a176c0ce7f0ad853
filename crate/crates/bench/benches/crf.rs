use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqtag_core::crf::{log_likelihood, log_partition, viterbi_decode, TransitionMatrix};
use seqtag_core::Matrix;

fn instance(n: usize, k: usize) -> (TransitionMatrix, Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut a = TransitionMatrix::zeros(k);
    for v in a.matrix_mut().as_mut_slice() {
        *v = rng.random_range(-2.0..2.0);
    }
    let p = Matrix::from_vec(n, k, (0..n * k).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let y = (0..n).map(|_| rng.random_range(0..k)).collect();
    (a, p, y)
}

fn bench_crf(c: &mut Criterion) {
    let mut g = c.benchmark_group("crf");
    // 11 and 21 tags are the two HAREM scenarios
    for &(n, k) in &[(128, 11), (512, 11), (512, 21)] {
        let (a, p, y) = instance(n, k);
        let id = format!("n{n}_k{k}");
        g.bench_with_input(BenchmarkId::new("viterbi", &id), &(), |b, _| {
            b.iter(|| viterbi_decode(&a, &p).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("log_partition", &id), &(), |b, _| {
            b.iter(|| log_partition(&a, &p).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("log_likelihood", &id), &(), |b, _| {
            b.iter(|| log_likelihood(&a, &p, &y).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_crf);
criterion_main!(benches);
