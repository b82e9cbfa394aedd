use criterion::{black_box, criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};

use distillstream::dedup::{dedup_stream, DedupConfig};
use distillstream::trainer::{backward, StudentModel};
use distillstream_bench::{pairs, samples, scorer, DIM};

fn dedup(c: &mut Criterion) {
    let mut group = c.benchmark_group("dedup");
    group.sample_size(10);
    for n in [1_000usize, 5_000] {
        let input = pairs(n);
        group.throughput(Throughput::Elements(input.len() as u64));
        for (name, config) in [("exact", DedupConfig::default()), ("lsh", DedupConfig::lsh())] {
            group.bench_with_input(BenchmarkId::new(name, n), &input, |b, input| {
                b.iter_batched(
                    || input.clone(),
                    |p| dedup_stream(p, DIM, &config).unwrap(),
                    BatchSize::LargeInput,
                )
            });
        }
    }
    group.finish();
}

fn student(c: &mut Criterion) {
    let batch = samples(256);
    let batch = &batch[..64];
    let mut group = c.benchmark_group("student");
    group.throughput(Throughput::Elements(batch.len() as u64));
    for (name, model) in [("linear", StudentModel::linear(DIM)), ("mlp1", StudentModel::mlp1(DIM, 128, 0))] {
        group.bench_function(BenchmarkId::new("forward", name), |b| {
            b.iter(|| {
                for s in batch {
                    black_box(model.forward(&s.embedding).unwrap());
                }
            })
        });
        group.bench_function(BenchmarkId::new("backward", name), |b| b.iter(|| backward(&model, black_box(batch)).unwrap()));
    }
    group.finish();
}

fn teacher(c: &mut Criterion) {
    let teacher = scorer();
    let texts: Vec<String> = pairs(1_000).into_iter().map(|p| p.text).collect();
    let mut group = c.benchmark_group("teacher");
    group.throughput(Throughput::Elements(texts.len() as u64));
    group.bench_function("lexicon", |b| {
        b.iter(|| {
            for t in &texts {
                black_box(teacher.score(t));
            }
        })
    });
    group.finish();
}

criterion_group!(benches, dedup, student, teacher);
criterion_main!(benches);
