use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use bottleneck::attack::{adversarial_accuracy, AttackConfig};
use bottleneck::data::{gen_tabular, TabularSpec};
use bottleneck::game::{MaskedModelGame, OutputMode, ValueTable};
use bottleneck::neural::MlpModel;
use bottleneck::profile::{build_plan, strength_profile, PlanConfig};
use bottleneck::rng;
use bottleneck::theory::simulate_theorem1;
use bottleneck::Exec;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn model(n: usize) -> MlpModel {
    MlpModel::init(&[n, 100, 100, 100, 100, 2], &mut rng::stream(1, &[0])).unwrap()
}

fn bench_tabulate(c: &mut Criterion) {
    let n = 12;
    let m = model(n);
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
    let game = MaskedModelGame::new(&m, x, vec![0.0; n], 0, OutputMode::LogOdds).unwrap();
    let mut g = c.benchmark_group("tabulate_n12");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| ValueTable::tabulate(&game, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_profile(c: &mut Criterion) {
    let n = 10;
    let mut r = rng::stream(2, &[0]);
    let games: Vec<_> = (0..8)
        .map(|_| bottleneck::game::AnalyticGame::random_table(n, &mut r).unwrap())
        .collect();
    let plan = build_plan(&PlanConfig::tabular(n, games.len(), 1 << 20), 3).unwrap();
    let mut g = c.benchmark_group("strength_profile_n10");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| strength_profile(&games, &plan, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_theorem1(c: &mut Criterion) {
    let mut g = c.benchmark_group("theorem1_n12_10k");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| simulate_theorem1(12, 1.0, 10_000, 4, exec).unwrap())
        });
    }
    g.finish();
}

fn bench_attack(c: &mut Criterion) {
    let spec = TabularSpec {
        samples: 1000,
        ..TabularSpec::default()
    };
    let data = gen_tabular(&spec, 5).unwrap();
    let m = model(data.n());
    let cfg = AttackConfig {
        steps: 10,
        ..AttackConfig::default()
    };
    let mut g = c.benchmark_group("pgd_200_rows");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| adversarial_accuracy(&m, &data, &data.test, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench_tabulate, bench_profile, bench_theorem1, bench_attack);
criterion_main!(benches);
