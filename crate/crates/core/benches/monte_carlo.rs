use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use longrun_core::calibration::calibration_model;
use longrun_core::closed_form::{self, Measure};
use longrun_core::linalg::{Mat, Vector};
use longrun_core::simulate::{self, Scheme, SimConfig};
use longrun_core::{CirModel, MarketModel, Preferences};

fn cir() -> CirModel {
    CirModel::new(
        Mat::from_element(1, 1, 1.0),
        Vector::from_element(1, 0.1),
        Vector::from_element(1, 0.3),
        0.5,
        0.1,
        0.2,
        Vector::from_element(1, -0.5),
        0.01,
        0.02,
    )
    .unwrap()
}

fn state_sampling(c: &mut Criterion) {
    let model = MarketModel::Cir(cir());
    let prefs = Preferences::new(-2.0).unwrap();
    let mut group = c.benchmark_group("cir_euler_terminal");
    group.sample_size(10);
    for parallel in [false, true] {
        let mut cfg = SimConfig::new(20_000, 0.01, 1).unwrap();
        cfg.scheme = Scheme::FullTruncationEuler;
        cfg.parallel = parallel;
        let label = if parallel { "rayon" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &cfg, |b, cfg| {
            b.iter(|| simulate::sample_state_terminal(&model, &prefs, Measure::MyopicPhat, 0.1, 12.0, cfg).unwrap())
        });
    }
    group.finish();
}

fn wealth_paths(c: &mut Criterion) {
    let m = calibration_model();
    let prefs = Preferences::new(-1.0).unwrap();
    let sol = closed_form::solve_ou_1d(&m, &prefs).unwrap();
    let policy = closed_form::ou_long_run_policy(&m, &prefs, &sol).unwrap();
    let model = MarketModel::KimOmberg(m);
    let mut group = c.benchmark_group("wealth_and_sdf");
    group.sample_size(10);
    for parallel in [false, true] {
        let mut cfg = SimConfig::new(5_000, 0.1, 1).unwrap();
        cfg.parallel = parallel;
        let label = if parallel { "rayon" } else { "sequential" };
        group.bench_with_input(BenchmarkId::from_parameter(label), &cfg, |b, cfg| {
            b.iter(|| simulate::simulate_wealth_and_sdf(&model, &policy, 0.0, 60.0, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, state_sampling, wealth_paths);
criterion_main!(benches);
