mod common;

use common::{calibration, sample_cir};
use longrun_core::closed_form::{self, Measure};
use longrun_core::horizon;
use longrun_core::simulate::{self, Scheme, SimConfig};
use longrun_core::{MarketModel, Preferences};

/// Two-sample Kolmogorov–Smirnov statistic.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn results_do_not_depend_on_parallelism() {
    let m = MarketModel::Cir(sample_cir());
    let prefs = Preferences::new(-2.0).unwrap();
    let mut cfg = SimConfig::new(3000, 0.05, 99).unwrap();
    cfg.scheme = Scheme::FullTruncationEuler;
    let a = simulate::sample_state_terminal(&m, &prefs, Measure::MyopicPhat, 0.1, 6.0, &cfg).unwrap();
    cfg.parallel = false;
    let b = simulate::sample_state_terminal(&m, &prefs, Measure::MyopicPhat, 0.1, 6.0, &cfg).unwrap();
    assert_eq!(a, b);

    let sol = closed_form::solve_cir(&sample_cir(), &prefs).unwrap();
    let pol = closed_form::cir_long_run_policy(&sample_cir(), &prefs, &sol).unwrap();
    let mut cfg = SimConfig::new(500, 0.1, 5).unwrap();
    let x = simulate::simulate_wealth_and_sdf(&m, &pol, 0.1, 12.0, &cfg).unwrap();
    cfg.parallel = false;
    let y = simulate::simulate_wealth_and_sdf(&m, &pol, 0.1, 12.0, &cfg).unwrap();
    assert_eq!(x, y);
}

#[test]
fn euler_and_exact_laws_agree() {
    let prefs = Preferences::new(-1.0).unwrap();
    let n = 10_000;
    // threshold for the two-sample test at level 1e-3
    let crit = 1.95 * (2.0 / n as f64).sqrt();
    for (model, y0) in [(MarketModel::KimOmberg(calibration()), 0.5), (MarketModel::Cir(sample_cir()), 0.1)] {
        let mut cfg = SimConfig::new(n, 1e-3, 2024).unwrap();
        let exact = simulate::sample_state_terminal(&model, &prefs, Measure::MyopicPhat, y0, 2.0, &cfg).unwrap();
        cfg.scheme = Scheme::FullTruncationEuler;
        cfg.seed = 77;
        let euler = simulate::sample_state_terminal(&model, &prefs, Measure::MyopicPhat, y0, 2.0, &cfg).unwrap();
        let d = ks_statistic(&exact.draws, &euler.draws);
        assert!(d < crit, "KS {d} >= {crit}");
    }
}

#[test]
fn monte_carlo_reproduces_the_identity() {
    let m = calibration();
    let prefs = Preferences::new(-1.0).unwrap();
    let sol = closed_form::solve_ou_1d(&m, &prefs).unwrap();
    let cfg = SimConfig::new(100_000, 0.1, 42).unwrap();
    let t = 60.0;
    let y0 = 0.0;
    let draws =
        simulate::sample_state_terminal(&MarketModel::KimOmberg(m.clone()), &prefs, Measure::MyopicPhat, y0, t, &cfg).unwrap().draws;
    let scale = (sol.lambda * t + sol.value(y0)).exp();
    let est = simulate::mc_estimate(&draws, |y| scale * (-sol.value(y)).exp()).unwrap();
    let exact = horizon::finite_horizon_bounds(&m, &sol, &prefs, y0, t).unwrap().primal();
    assert!(est.z_score(exact) < 3.0, "{est:?} vs {exact}");
    assert!(est.warning.is_none());
}

#[test]
fn heavy_tails_raise_a_warning() {
    let m = calibration();
    let prefs = Preferences::new(-4.0).unwrap();
    let sol = closed_form::solve_ou_1d(&m, &prefs).unwrap();
    let cfg = SimConfig::new(10_000, 0.1, 42).unwrap();
    let draws =
        simulate::sample_state_terminal(&MarketModel::KimOmberg(m.clone()), &prefs, Measure::MyopicPhat, 0.0, 240.0, &cfg).unwrap().draws;
    let est = simulate::mc_estimate(&draws, |y| (-sol.value(y)).exp()).unwrap();
    println!("max share {}", est.max_share);
    assert!(est.warning.is_some(), "{est:?}");
}
