use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lorafl::exec::Execution;
use lorafl::fl::SyntheticConfig;
use lorafl::linksim::{estimate_success, InterferenceConfig, LinkEnv};
use lorafl::phy::{RadioConfig, SfTables, SpreadingFactor};
use lorafl::scenario::{self, DataConfig, ScenarioConfig, Variant};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn monte_carlo(c: &mut Criterion) {
    let interference = InterferenceConfig { intensity_per_m2: 1e-4, ..Default::default() };
    let env = LinkEnv::new(RadioConfig::default(), SfTables::default(), interference).unwrap();
    let sf = SpreadingFactor::new(9).unwrap();
    let mut group = c.benchmark_group("link_monte_carlo");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 5_000), &exec, |b, &exec| {
            b.iter(|| estimate_success(&env, sf, black_box(400.0), 5_000, 1, exec))
        });
    }
    group.finish();
}

fn replications(c: &mut Criterion) {
    let mut cfg = ScenarioConfig::default();
    cfg.replications = 4;
    cfg.schedule.rounds = 3;
    cfg.train.hidden_layers = vec![32];
    cfg.data = DataConfig::Synthetic(SyntheticConfig { features: 64, inactive_features: 16, train_samples: 1000, test_samples: 200, ..Default::default() });
    let variants = [Variant { name: "bench".into(), cfg }];
    let mut group = c.benchmark_group("replications");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new(name, 4), &exec, |b, &exec| {
            b.iter(|| scenario::run_variants(black_box(&variants), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, monte_carlo, replications);
criterion_main!(benches);
