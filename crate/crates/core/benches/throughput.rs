use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use railcross::antenna::{gain_dbi, AntennaPattern};
use railcross::channel::PathLossModel;
use railcross::exec::map_with;
use railcross::sim::{run_many, Scenario, ScenarioConfig, BUNDLED_SCENARIO};
use railcross::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

// Seed sweep over the bundled crossing with shadowing on, so every leg differs.
fn seed_sweep(n: u64) -> Vec<Scenario> {
    (0..n)
        .map(|seed| {
            let mut cfg = ScenarioConfig::from_toml(BUNDLED_SCENARIO).unwrap();
            cfg.seed = seed;
            cfg.duration_ms = 60_000;
            cfg.path_loss = PathLossModel::log_distance(3.2, 4.0);
            Scenario::from_config(cfg).unwrap()
        })
        .collect()
}

fn sweep(c: &mut Criterion) {
    let scenarios = seed_sweep(16);
    let mut group = c.benchmark_group("run_many");
    group.sample_size(10);
    group.throughput(Throughput::Elements(scenarios.len() as u64));
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &scenarios, |b, s| b.iter(|| run_many(s, mode)));
    }
    group.finish();
}

fn pattern(c: &mut Criterion) {
    let ula = AntennaPattern::ula(8, 0.5, 12.0).unwrap();
    let azimuths: Vec<f64> = (0..360_000).map(|i| f64::from(i) / 1000.0).collect();
    let mut group = c.benchmark_group("pattern_sampling");
    group.throughput(Throughput::Elements(azimuths.len() as u64));
    for (name, mode) in MODES {
        group.bench_with_input(BenchmarkId::from_parameter(name), &azimuths, |b, az| {
            b.iter(|| map_with(mode, az, |&a| gain_dbi(&ula, a)))
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, pattern);
criterion_main!(benches);
