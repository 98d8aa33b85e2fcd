#![allow(dead_code)]

use longrun_core::linalg::{Mat, Vector};
use longrun_core::{CirModel, KimOmbergModel, LinearDiffusionModel, Preferences};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn calibration() -> KimOmbergModel {
    longrun_core::calibration::calibration_model()
}

pub fn sample_cir() -> CirModel {
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

/// `ν₁ = -ρ` model with a prescribed `δ` at `p = -20`.
pub fn kappa_one(delta: f64, b: f64, nu0: f64) -> (KimOmbergModel, Preferences) {
    let prefs = Preferences::new(-20.0).unwrap();
    let rho_sq = (1.0 - 1.0 / delta) / prefs.q;
    let m = KimOmbergModel::with_kappa(
        Mat::from_element(1, 1, 0.05),
        Vector::from_element(1, nu0),
        1.0,
        b,
        Vector::from_element(1, -rho_sq.sqrt()),
        0.001,
    )
    .unwrap();
    (m, prefs)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Mat {
    Mat::from_fn(r, c, |_, _| uniform(rng, -scale, scale))
}

/// Random linear model with `k ≤ n ≤ 4` satisfying the positive-definiteness
/// assumptions, and a `p < 0`.
pub fn random_linear(seed: u64) -> (LinearDiffusionModel, Preferences) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4usize);
    let k = rng.random_range(1..=n);
    let mut sigma = random_mat(&mut rng, n, n, 0.05).lower_triangle();
    for i in 0..n {
        sigma[(i, i)] = uniform(&mut rng, 0.1, 0.3);
    }
    let mut mu1 = random_mat(&mut rng, n, k, 0.1);
    for i in 0..k {
        mu1[(i, i)] += if rng.random_bool(0.5) { 0.3 } else { -0.3 };
    }
    let mut b = random_mat(&mut rng, k, k, 0.05);
    for i in 0..k {
        b[(i, i)] = uniform(&mut rng, 0.1, 1.0);
    }
    let s = random_mat(&mut rng, k, k, 0.1);
    let mut a = (&s + s.transpose()) * 0.5;
    for i in 0..k {
        a[(i, i)] = uniform(&mut rng, 0.5, 1.5);
    }
    let raw = random_mat(&mut rng, n, k, 1.0);
    let rho = &raw * (uniform(&mut rng, 0.0, 0.8) / raw.norm());
    let mu0 = Vector::from_fn(n, |_, _| uniform(&mut rng, -0.05, 0.1));
    let r1 = Vector::from_fn(k, |_, _| uniform(&mut rng, -0.01, 0.01));
    let p = uniform(&mut rng, -5.0, -0.2);
    let model = LinearDiffusionModel::new(mu0, mu1, sigma, b, a, rho, 0.002, r1).unwrap();
    (model, Preferences::new(p).unwrap())
}

/// Random one-asset OU model and `p < 0`.
pub fn random_ou(seed: u64) -> (KimOmbergModel, Preferences) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = KimOmbergModel::new(
        Mat::from_element(1, 1, uniform(&mut rng, 0.02, 0.3)),
        Vector::from_element(1, uniform(&mut rng, -0.1, 0.2)),
        Vector::from_element(1, uniform(&mut rng, -1.5, 1.5)),
        uniform(&mut rng, 0.01, 0.5),
        Vector::from_element(1, uniform(&mut rng, -0.95, 0.95)),
        uniform(&mut rng, 0.0, 0.005),
    )
    .unwrap();
    (m, Preferences::new(uniform(&mut rng, -10.0, -0.1)).unwrap())
}

/// Horizon and step count for the Riccati flow to settle on the stabilizing
/// root, given the slowest and fastest closed-loop rates.
pub fn oracle_grid(spectrum_min: f64, scale: f64) -> (f64, usize) {
    let t = 40.0 / spectrum_min;
    let steps = ((t * scale / 0.02).ceil() as usize).max(1000);
    (t, steps)
}
