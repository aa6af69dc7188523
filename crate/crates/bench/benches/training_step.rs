use std::hint::black_box;

use clustergcf::propagation;
use clustergcf::training::{self, init_params};
use clustergcf::{AdamState, L2Penalty, NegativeSampler, NoiseMode, PropagationConfig};
use clustergcf_bench::fixture;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn bench_step(c: &mut Criterion) {
    let fx = fixture(2000, 1200, 20, 7).expect("fixture");
    let sampler = NegativeSampler::new(&fx.dataset);
    let penalty = L2Penalty::new(1e-4);
    let mut group = c.benchmark_group("training_step");
    group.sample_size(20);
    for (layers, clusters) in [(3, 1), (3, 2), (6, 2), (6, 4)] {
        let prop = PropagationConfig::new(layers, clusters, 2).expect("config");
        let id = BenchmarkId::new(format!("K{layers}"), format!("C{clusters}"));
        group.bench_function(id, |b| {
            let mut params = init_params(fx.graph.n_nodes(), 64, clusters, 1).unwrap();
            let mut adam = AdamState::new(params.n_params());
            let mut rng = NegativeSampler::worker_rng(1, 0);
            b.iter(|| {
                let batch = sampler.sample_batch(2048, &mut rng).unwrap();
                let trace = propagation::forward(&fx.graph, &params, &prop, &mut rng, NoiseMode::Train).unwrap();
                let grads = training::backward(&trace, &batch, &prop, &fx.graph, &params, &penalty).unwrap();
                training::adam_step(&mut params, black_box(&grads), &mut adam, 1e-3).unwrap();
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_step);
criterion_main!(benches);
