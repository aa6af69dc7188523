use std::hint::black_box;

use clustergcf::evaluation;
use clustergcf::sparse::spmm;
use clustergcf::{DenseMatrix, Split};
use clustergcf_bench::fixture;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

fn bench_spmm(c: &mut Criterion) {
    let mut group = c.benchmark_group("spmm");
    for &(users, items) in &[(500, 300), (2000, 1200)] {
        let fx = fixture(users, items, 20, 1).expect("fixture");
        for d in [32, 64] {
            let x = random_matrix(fx.graph.n_nodes(), d, 2);
            group.bench_with_input(BenchmarkId::new(format!("{users}x{items}"), d), &x, |b, x| {
                b.iter(|| spmm(black_box(fx.graph.laplacian()), black_box(x)).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for n in [1000, 5000] {
        let x = random_matrix(n, 64, 3);
        let w = random_matrix(64, 64, 4);
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| black_box(x).matmul(black_box(&w)).unwrap())
        });
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let fx = fixture(2000, 1200, 20, 5).expect("fixture");
    let emb = random_matrix(fx.graph.n_nodes(), 64, 6);
    c.bench_function("evaluate_recall20", |b| {
        b.iter(|| evaluation::evaluate(black_box(&emb), &fx.dataset, Split::Test, 20).unwrap())
    });
}

criterion_group!(benches, bench_spmm, bench_matmul, bench_evaluate);
criterion_main!(benches);
