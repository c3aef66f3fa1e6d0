use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mnlbandit::harness::{run_experiment_sequential, AlgoKind, ExperimentConfig};

fn config(runs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.algorithms = vec![AlgoKind::OfuMnlPlusPlus, AlgoKind::UcbMnl, AlgoKind::TsMnl];
    cfg.env.horizon = 200;
    cfg.env.n_items = 20;
    cfg.runs = runs;
    cfg.tau_multiplier = 0.02;
    cfg.timing = false;
    cfg
}

fn replicas(c: &mut Criterion) {
    let mut group = c.benchmark_group("monte_carlo_replicas");
    group.sample_size(10);
    for runs in [4usize, 16] {
        let cfg = config(runs);
        group.bench_with_input(BenchmarkId::new("sequential", runs), &cfg, |b, cfg| {
            b.iter(|| black_box(run_experiment_sequential(cfg).unwrap()))
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("parallel", runs), &cfg, |b, cfg| {
            b.iter(|| black_box(mnlbandit::harness::run_experiment_parallel(cfg).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, replicas);
criterion_main!(benches);
