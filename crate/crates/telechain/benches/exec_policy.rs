use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use telechain::builtins::{cluster_x, hypergraph};
use telechain::exec::ExecPolicy;
use telechain::verifier::{verify_state_transfer, Backend, Mode, VerifyOptions};

fn enumerate(c: &mut Criterion) {
    let mut group = c.benchmark_group("enumerate");
    group.sample_size(10);
    let cases = [("cluster_x_9", cluster_x(9).unwrap()), ("hypergraph_2", hypergraph(2).unwrap())];
    for (name, p) in &cases {
        for policy in [ExecPolicy::Sequential, ExecPolicy::Parallel] {
            let opts = VerifyOptions {
                mode: Mode::Enumerate,
                backend: Backend::Statevector,
                policy,
                ..VerifyOptions::default()
            };
            group.bench_with_input(BenchmarkId::new(format!("{policy:?}"), name), p, |b, p| {
                b.iter(|| black_box(verify_state_transfer(p, opts).unwrap()))
            });
        }
    }
    group.finish();
}

fn sample(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample");
    group.sample_size(10);
    let p = hypergraph(3).unwrap();
    for policy in [ExecPolicy::Sequential, ExecPolicy::Parallel] {
        let opts = VerifyOptions {
            mode: Mode::Sample { shots: 64, seed: 1 },
            backend: Backend::Statevector,
            policy,
            ..VerifyOptions::default()
        };
        group.bench_function(BenchmarkId::new(format!("{policy:?}"), "hypergraph_3"), |b| {
            b.iter(|| black_box(verify_state_transfer(&p, opts).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, enumerate, sample);
criterion_main!(benches);
