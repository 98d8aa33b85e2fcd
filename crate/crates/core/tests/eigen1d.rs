mod common;

use common::{calibration, sample_cir};
use longrun_core::closed_form;
use longrun_core::eigen1d::{self, Eigen1dProblem, GridConfig, Truncation};
use longrun_core::{MarketModel, Preferences};

#[test]
fn ou_eigenvalue_matches_closed_form() {
    for p in [-1.0, -4.0, 0.5] {
        let prefs = Preferences::new(p).unwrap();
        let m = calibration();
        let exact = closed_form::solve_ou_1d(&m, &prefs).unwrap();
        let pr = Eigen1dProblem::from_model(&MarketModel::KimOmberg(m), &prefs).unwrap();
        let sol = eigen1d::principal_eigenvalue(&pr, &GridConfig::for_problem(&pr)).unwrap();
        println!("p = {p}: eigen {:.10e}, closed form {:.10e}", sol.lambda_c, exact.lambda);
        assert!((sol.lambda_c / exact.lambda - 1.0).abs() < 1e-3);
        // eigenfunction against v0 y + v1 y²/2
        let c = sol.truncation.n_left;
        for i in [c - 40, c + 40] {
            let y = sol.grid[i];
            let v = exact.value(y);
            assert!((sol.v[i] - v).abs() < 1e-3 * (1.0 + v.abs()), "y = {y}: {} vs {v}", sol.v[i]);
        }
    }
}

#[test]
fn cir_eigenvalue_matches_closed_form() {
    let prefs = Preferences::new(-2.0).unwrap();
    let m = sample_cir();
    let exact = closed_form::solve_cir(&m, &prefs).unwrap();
    let pr = Eigen1dProblem::from_model(&MarketModel::Cir(m), &prefs).unwrap();
    let sol = eigen1d::principal_eigenvalue(&pr, &GridConfig::for_problem(&pr)).unwrap();
    println!("cir: eigen {:.10e}, closed form {:.10e}, eps sensitivity {:?}", sol.lambda_c, exact.lambda, sol.epsilon_sensitivity);
    assert!((sol.lambda_c / exact.lambda - 1.0).abs() < 1e-3);
    assert!(sol.epsilon_sensitivity.unwrap().abs() < 1e-6);
    let c = sol.truncation.n_left;
    for i in [c - 100, c + 100] {
        let y = sol.grid[i];
        let v = exact.value(y) - exact.value(0.1);
        assert!((sol.v[i] - v).abs() < 1e-3 * (1.0 + v.abs()), "y = {y}: {} vs {v}", sol.v[i]);
    }
}

#[test]
fn second_order_in_step() {
    let prefs = Preferences::new(-1.0).unwrap();
    let m = calibration();
    let exact = closed_form::solve_ou_1d(&m, &prefs).unwrap().lambda;
    let pr = Eigen1dProblem::from_model(&MarketModel::KimOmberg(m), &prefs).unwrap();
    let cfg = GridConfig::for_problem(&pr);
    let sol = eigen1d::principal_eigenvalue(&pr, &cfg).unwrap();
    let extent = sol.convergence_history.last().unwrap().extent;
    let h = 4.0 * cfg.step;
    let errs: Vec<f64> = [h, h / 2.0, h / 4.0]
        .iter()
        .map(|&s| {
            let tr = Truncation::around(&pr, -extent, extent, s).unwrap();
            (eigen1d::dirichlet_eigenpair(&pr, &tr).unwrap().0 - exact).abs()
        })
        .collect();
    let r1 = errs[0] / errs[1];
    let r2 = errs[1] / errs[2];
    println!("errors {errs:?}, ratios {r1:.3} {r2:.3}");
    assert!((r1 - 4.0).abs() < 0.5 && (r2 - 4.0).abs() < 0.5);
}

#[test]
fn hjb_residual_small_in_interior() {
    let prefs = Preferences::new(-2.0).unwrap();
    let pr = Eigen1dProblem::from_model(&MarketModel::Cir(sample_cir()), &prefs).unwrap();
    let sol = eigen1d::principal_eigenvalue(&pr, &GridConfig::for_problem(&pr)).unwrap();
    let worst = eigen1d::discrete_hjb_residual(&pr, &sol)
        .into_iter()
        .filter(|(y, _)| (0.01..=0.5).contains(y))
        .map(|(_, r)| r.abs())
        .fold(0.0, f64::max);
    println!("max residual {worst:e}");
    assert!(worst < 1e-4);
}

#[test]
fn m_nu_quadrature_cross_check() {
    let prefs = Preferences::new(-2.0).unwrap();
    let pr = Eigen1dProblem::from_model(&MarketModel::Cir(sample_cir()), &prefs).unwrap();
    for y in [0.01, 0.05, 0.3, 1.0] {
        let a = eigen1d::m_nu_density(&pr, y, 0.1).unwrap();
        let b = eigen1d::m_nu_density_quadrature(&pr, y, 0.1, 1e-12).unwrap();
        assert!((a / b - 1.0).abs() < 1e-8, "y = {y}: {a} vs {b}");
    }
}

#[test]
fn tightness_for_calibration_and_cir() {
    let prefs = Preferences::new(-1.0).unwrap();
    let pr = Eigen1dProblem::from_model(&MarketModel::KimOmberg(calibration()), &prefs).unwrap();
    let sol = eigen1d::principal_eigenvalue(&pr, &GridConfig::for_problem(&pr)).unwrap();
    let rep = eigen1d::feller_tightness_test(&pr, &sol).unwrap();
    println!("{rep:?}");
    assert!(rep.tight);

    let prefs = Preferences::new(-2.0).unwrap();
    let pr = Eigen1dProblem::from_model(&MarketModel::Cir(sample_cir()), &prefs).unwrap();
    let sol = eigen1d::principal_eigenvalue(&pr, &GridConfig::for_problem(&pr)).unwrap();
    let rep = eigen1d::feller_tightness_test(&pr, &sol).unwrap();
    println!("{rep:?}");
    assert!(rep.tight);
}

#[test]
fn cel_decay_constant_region_and_value() {
    let prefs = Preferences::new(-1.0).unwrap();
    let pr = Eigen1dProblem::from_model(&MarketModel::KimOmberg(calibration()), &prefs).unwrap();
    let sol = eigen1d::principal_eigenvalue(&pr, &GridConfig::for_problem(&pr)).unwrap();
    let k = eigen1d::cel_decay_constant(&pr, &sol, &prefs).unwrap();
    println!("{k:?}");
    assert!(k.k.is_finite() && k.limit.is_finite());
    let prefs = Preferences::new(-4.0).unwrap();
    let pr = Eigen1dProblem::from_model(&MarketModel::KimOmberg(calibration()), &prefs).unwrap();
    let sol = eigen1d::principal_eigenvalue(&pr, &GridConfig::for_problem(&pr)).unwrap();
    assert!(matches!(eigen1d::cel_decay_constant(&pr, &sol, &prefs), Err(longrun_core::Error::RegionViolation(_))));
}

#[test]
fn null_recurrent_state_is_not_tight() {
    let pr = Eigen1dProblem {
        coordinate: eigen1d::Coordinate::Identity,
        a2: 1.0,
        d0: 0.0,
        d1: 0.0,
        c0: 0.0,
        c1: 0.0,
        c2: 0.0,
        c_inv: 0.0,
        delta: 1.0,
        center: 0.0,
    };
    let cfg = GridConfig { initial_extent: 50.0, step: 0.05, tol: 1e-4, ..GridConfig::for_problem(&pr) };
    let sol = eigen1d::principal_eigenvalue(&pr, &cfg).unwrap();
    assert!(sol.lambda_c.abs() < 1e-3, "{}", sol.lambda_c);
    let rep = eigen1d::feller_tightness_test(&pr, &sol).unwrap();
    assert!(!rep.tight, "{rep:?}");
}
