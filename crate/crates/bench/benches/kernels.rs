use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spanqa_bench::{desk_model, sample_encoding, sample_text, sample_vocab};
use spanqa_core::span::{decode_best_span, DecodeConfig};
use spanqa_core::tokenizer::{tokenize_context, wordpiece_tokenize};
use spanqa_core::{QaModel, Tape, Tensor};

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = c.benchmark_group("matmul");
    for n in [32usize, 64, 128] {
        let (a, b) = (random(&mut rng, &[n, n]), random(&mut rng, &[n, n]));
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| {
                let mut tape = Tape::new();
                let (x, y) = (tape.constant(a.clone()), tape.constant(b.clone()));
                tape.matmul(x, y).unwrap()
            })
        });
    }
    g.finish();
}

fn forward(c: &mut Criterion) {
    let vocab = sample_vocab();
    let mut g = c.benchmark_group("forward");
    for (name, bilstm) in [("encoder", false), ("encoder+bilstm", true)] {
        let model = QaModel::seeded(desk_model(vocab.len(), bilstm), 3).unwrap();
        let enc = sample_encoding(&vocab, 40, 64);
        g.bench_function(name, |bench| bench.iter(|| model.forward(&enc).unwrap()));
    }
    g.finish();
}

fn decode(c: &mut Criterion) {
    let vocab = sample_vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let enc = sample_encoding(&vocab, 300, 384);
    let ctx = sample_text(300);
    let start: Vec<f64> = (0..enc.len()).map(|_| rng.random_range(-4.0..4.0)).collect();
    let end: Vec<f64> = (0..enc.len()).map(|_| rng.random_range(-4.0..4.0)).collect();
    let cfg = DecodeConfig::default();
    c.bench_function("decode_best_span/384", |bench| {
        bench.iter(|| decode_best_span(&start, &end, &enc, &ctx, &cfg).unwrap())
    });
}

fn wordpiece(c: &mut Criterion) {
    let vocab = sample_vocab();
    let text = sample_text(1000);
    c.bench_function("wordpiece/word", |bench| {
        bench.iter(|| wordpiece_tokenize("unflowing", &vocab))
    });
    c.bench_function("tokenize_context/1000", |bench| {
        bench.iter(|| tokenize_context(&text, &vocab))
    });
}

criterion_group!(benches, matmul, forward, decode, wordpiece);
criterion_main!(benches);
