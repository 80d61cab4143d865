//! Sequential against rayon-parallel execution of the data-parallel stages.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use evac_core::graph::{similarity_matrix, NodeFeatureTable};
use evac_core::harness::{rolling_run, ModelConfig, RollingConfig};
use evac_core::synthetic::{generate_scenario, ScenarioConfig};
use evac_core::trip::{infer_demand, InferenceParams, TractIndex};
use evac_core::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn trip_inference(c: &mut Criterion) {
    let s = generate_scenario(&ScenarioConfig::default(), Exec::Parallel).unwrap();
    let index = TractIndex::new(s.tracts.clone()).unwrap();
    let workdays = s.calendar.workday_indices().unwrap();
    let mut g = c.benchmark_group("infer_demand");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| infer_demand(&s.pings, &index, s.grid, &workdays, InferenceParams::default(), exec).unwrap())
        });
    }
    g.finish();
}

fn similarity(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, m) = (300, 12);
    let table = NodeFeatureTable::new(
        (0..n).map(|i| format!("t{i}")).collect(),
        (0..m).map(|j| format!("f{j}")).collect(),
        (0..n)
            .map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
    )
    .unwrap();
    let mut g = c.benchmark_group("similarity_matrix");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| similarity_matrix(&table, exec).unwrap())
        });
    }
    g.finish();
}

fn training(c: &mut Criterion) {
    let cfg = ScenarioConfig {
        n_devices: 120,
        ..ScenarioConfig::default()
    };
    let data = generate_scenario(&cfg, Exec::Parallel)
        .unwrap()
        .forecast_data(Exec::Parallel)
        .unwrap();
    let mut params = ModelConfig::desk();
    params.train.max_epochs = 2;
    params.train.patience_epochs = 2;
    let rolling = RollingConfig {
        test_days: Some(vec![data.fire_days[0]]),
        params,
        ..RollingConfig::default()
    };
    let mut g = c.benchmark_group("train_one_day");
    g.sample_size(10).measurement_time(Duration::from_secs(20));
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| rolling_run(&data, &rolling, "bench", exec).unwrap())
        });
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = trip_inference, similarity, training
}
criterion_main!(benches);
