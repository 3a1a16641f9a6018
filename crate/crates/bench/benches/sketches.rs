use criterion::{black_box, criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion, Throughput};
use dartsketch::martingale::MartingaleSketch;
use dartsketch::packed::PackedVector;
use dartsketch::sketches::{CurtainParams, CurtainSketch, LogLogSketch, MinCountSketch, PcsaSketch, Sketch};
use dartsketch_bench::board;

const STREAM: u64 = 100_000;

fn feed<S: Sketch>(mut s: MartingaleSketch<S>) -> f64 {
    for e in 1..=STREAM {
        s.insert(e);
    }
    s.estimate()
}

fn inserts(c: &mut Criterion) {
    let mut g = c.benchmark_group("martingale_insert");
    g.throughput(Throughput::Elements(STREAM));
    g.sample_size(20);
    for m in [37usize, 400] {
        g.bench_with_input(BenchmarkId::new("pcsa", m), &m, |b, &m| {
            b.iter_batched(|| MartingaleSketch::new(PcsaSketch::new(board(2.0, m, 1))), feed, BatchSize::SmallInput)
        });
        g.bench_with_input(BenchmarkId::new("loglog", m), &m, |b, &m| {
            b.iter_batched(|| MartingaleSketch::new(LogLogSketch::new(board(2.0, m, 1))), feed, BatchSize::SmallInput)
        });
        g.bench_with_input(BenchmarkId::new("mincount_k2", m), &m, |b, &m| {
            b.iter_batched(|| MartingaleSketch::new(MinCountSketch::new(m, 2, 1).unwrap()), feed, BatchSize::SmallInput)
        });
        g.bench_with_input(BenchmarkId::new("curtain", m), &m, |b, &m| {
            let p = CurtainParams::new(2.91, 2, 1, m).unwrap();
            b.iter_batched(|| MartingaleSketch::new(CurtainSketch::new(p, 1)), feed, BatchSize::SmallInput)
        });
        g.bench_with_input(BenchmarkId::new("curtain_quantized", m), &m, |b, &m| {
            let p = CurtainParams::new(2.91, 2, 1, m).unwrap();
            b.iter_batched(|| MartingaleSketch::quantized(CurtainSketch::new(p, 1), 3), feed, BatchSize::SmallInput)
        });
    }
    g.finish();
}

fn prefix_sums(c: &mut Criterion) {
    let mut g = c.benchmark_group("prefix_sum");
    for len in [64usize, 512, 4096] {
        let values: Vec<u64> = (0..len as u64).map(|i| (i * 2654435761) >> 7 & 3).collect();
        let v = PackedVector::from_values(2, &values).unwrap();
        g.bench_with_input(BenchmarkId::new("swar", len), &v, |b, v| b.iter(|| v.prefix_sum(black_box(v.len() - 1))));
        g.bench_with_input(BenchmarkId::new("scalar", len), &v, |b, v| b.iter(|| v.prefix_sum_scalar(black_box(v.len() - 1))));
    }
    g.finish();
}

criterion_group!(benches, inserts, prefix_sums);
criterion_main!(benches);
