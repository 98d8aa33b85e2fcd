//! Long-run solution of the multivariate linear diffusion.
//!
//! The ergodic HJB equation admits the quadratic solution
//! `v(y) = v₀'y - ½ y'v₁y`. With
//!
//! ```text
//! M = A - qΥ'Σ⁻¹Υ,   F = b + qΥ'Σ⁻¹μ₁,   Q = qμ₁'Σ⁻¹μ₁
//! ```
//!
//! `v₁` solves the algebraic Riccati equation `v₁Mv₁ + v₁F + F'v₁ - Q = 0`
//! and is selected so that `D = F + Mv₁` has spectrum in the open right
//! half-plane. `v₀` then solves a linear system with matrix `D'`, and the
//! growth rate `λ` is an explicit quadratic form.

use nalgebra::Complex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{LinearDiffusionModel, Policy, PolicyKind, Preferences};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 200;
const BLOW_UP_LEVEL: f64 = 1e12;

/// Matrices of the Riccati system for a given model and risk exponent.
#[derive(Debug, Clone)]
pub struct RiccatiCoefficients {
    /// `Σ⁻¹`
    pub sigma_inv: Mat,
    /// `Υ = σρa'`
    pub upsilon: Mat,
    /// `A = aa'`
    pub state_cov: Mat,
    /// `M = A - qΥ'Σ⁻¹Υ`
    pub m: Mat,
    /// `F = b + qΥ'Σ⁻¹μ₁`
    pub f: Mat,
    /// `Q = qμ₁'Σ⁻¹μ₁`
    pub q: Mat,
}

impl RiccatiCoefficients {
    pub fn new(model: &LinearDiffusionModel, prefs: &Preferences) -> Result<Self> {
        let q = prefs.q;
        let sigma_inv = linalg::inverse(&model.covariance())?;
        let upsilon = model.cross_covariance();
        let state_cov = model.state_covariance();
        let ut_si = upsilon.transpose() * &sigma_inv;
        let m = linalg::symmetrize(&(&state_cov - &ut_si * &upsilon * q));
        let f = &model.b + &ut_si * &model.mu1 * q;
        let qm = linalg::symmetrize(&(model.mu1.transpose() * &sigma_inv * &model.mu1 * q));
        Ok(Self { sigma_inv, upsilon, state_cov, m, f, q: qm })
    }

    /// `XMX + XF + F'X - Q`.
    pub fn residual(&self, x: &Mat) -> Mat {
        x * &self.m * x + x * &self.f + self.f.transpose() * x - &self.q
    }

    /// Closed-loop matrix `D = F + MX`.
    pub fn closed_loop(&self, x: &Mat) -> Mat {
        &self.f + &self.m * x
    }

    fn hamiltonian(&self) -> Mat {
        // CARE form Ã'X + XÃ - XGX + Q = 0 with Ã = -F, G = M.
        let k = self.f.nrows();
        let mut h = Mat::zeros(2 * k, 2 * k);
        h.view_mut((0, 0), (k, k)).copy_from(&(-&self.f));
        h.view_mut((0, k), (k, k)).copy_from(&(-&self.m));
        h.view_mut((k, 0), (k, k)).copy_from(&(-&self.q));
        h.view_mut((k, k), (k, k)).copy_from(&self.f.transpose());
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RiccatiMethod {
    Newton,
    SignFunctionNewton,
}

/// A solution of the algebraic Riccati equation with its diagnostics.
#[derive(Debug, Clone)]
pub struct RiccatiRoot {
    pub v1: Mat,
    pub residual: f64,
    pub spectrum: Vec<Complex<f64>>,
    pub iterations: usize,
    pub method: RiccatiMethod,
}

fn spectrum_is_stabilizing(spec: &[Complex<f64>]) -> bool {
    spec.iter().all(|z| z.re > 0.0)
}

fn newton(coeffs: &RiccatiCoefficients, start: Mat) -> Option<(Mat, usize)> {
    let mut x = start;
    for it in 1..=NEWTON_MAX_ITER {
        let d = coeffs.closed_loop(&x);
        let r = coeffs.residual(&x);
        let step = linalg::lyapunov(&d, &(-r)).ok()?;
        x = linalg::symmetrize(&(&x + &step));
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        if step.norm() <= NEWTON_TOL * (1.0 + x.norm()) {
            return Some((x, it));
        }
    }
    None
}

fn sign_function_root(coeffs: &RiccatiCoefficients, stabilizing: bool) -> Result<Mat> {
    let k = coeffs.f.nrows();
    let s = linalg::matrix_sign(&coeffs.hamiltonian(), 1e-13, 200)?;
    let eye = Mat::identity(k, k);
    let shift = if stabilizing { 1.0 } else { -1.0 };
    let s11 = s.view((0, 0), (k, k)).into_owned();
    let s12 = s.view((0, k), (k, k)).into_owned();
    let s21 = s.view((k, 0), (k, k)).into_owned();
    let s22 = s.view((k, k), (k, k)).into_owned();
    let mut lhs = Mat::zeros(2 * k, k);
    lhs.view_mut((0, 0), (k, k)).copy_from(&s12);
    lhs.view_mut((k, 0), (k, k)).copy_from(&(&s22 + &eye * shift));
    let mut rhs = Mat::zeros(2 * k, k);
    rhs.view_mut((0, 0), (k, k)).copy_from(&(-(&s11 + &eye * shift)));
    rhs.view_mut((k, 0), (k, k)).copy_from(&(-s21));
    Ok(linalg::symmetrize(&linalg::least_squares(&lhs, &rhs)?))
}

fn finish(coeffs: &RiccatiCoefficients, x: Mat, iterations: usize, method: RiccatiMethod) -> RiccatiRoot {
    let residual = coeffs.residual(&x).norm();
    let spectrum = linalg::eigenvalues(&coeffs.closed_loop(&x));
    RiccatiRoot { v1: x, residual, spectrum, iterations, method }
}

fn accept(root: &RiccatiRoot) -> bool {
    spectrum_is_stabilizing(&root.spectrum) && root.residual < 1e-10 * (1.0 + root.v1.norm())
}

/// Stabilizing solution `v₁` of the algebraic Riccati equation.
///
/// Newton iteration with exact Lyapunov solves, started at zero when `-F` is
/// already stable and otherwise at the sign-function estimate of the stable
/// invariant subspace of the Hamiltonian.
pub fn solve_riccati(model: &LinearDiffusionModel, prefs: &Preferences) -> Result<RiccatiRoot> {
    if prefs.p >= 0.0 {
        return Err(Error::AssumptionViolation("the matrix Riccati solver requires p < 0".into()));
    }
    model.check_structure()?;
    let coeffs = RiccatiCoefficients::new(model, prefs)?;
    let k = model.k();

    if spectrum_is_stabilizing(&linalg::eigenvalues(&coeffs.f)) {
        if let Some((x, it)) = newton(&coeffs, Mat::zeros(k, k)) {
            let root = finish(&coeffs, x, it, RiccatiMethod::Newton);
            if accept(&root) {
                return Ok(root);
            }
        }
    }

    let start = sign_function_root(&coeffs, true)?;
    let (x, it) = newton(&coeffs, start).ok_or_else(|| Error::NoStabilizingSolution("Newton refinement diverged".into()))?;
    let root = finish(&coeffs, x, it, RiccatiMethod::SignFunctionNewton);
    if accept(&root) {
        Ok(root)
    } else {
        Err(Error::NoStabilizingSolution(format!("residual {:e}, spectrum {:?}", root.residual, root.spectrum)))
    }
}

/// Anti-stabilizing root (closed-loop spectrum in the left half-plane),
/// the unstable invariant subspace of the Hamiltonian. Diagnostic only.
pub fn anti_stabilizing_root(model: &LinearDiffusionModel, prefs: &Preferences) -> Result<RiccatiRoot> {
    let coeffs = RiccatiCoefficients::new(model, prefs)?;
    let start = sign_function_root(&coeffs, false)?;
    let (x, it) = newton(&coeffs, start.clone()).unwrap_or((start, 0));
    Ok(finish(&coeffs, x, it, RiccatiMethod::SignFunctionNewton))
}

/// Solves `(v₁M + F')v₀ = p r₁ - q(μ₁' - v₁Υ')Σ⁻¹μ₀`.
pub fn solve_v0(v1: &Mat, model: &LinearDiffusionModel, prefs: &Preferences) -> Result<Vector> {
    let coeffs = RiccatiCoefficients::new(model, prefs)?;
    let (lhs, rhs) = v0_system(&coeffs, v1, model, prefs);
    linalg::solve(&lhs, &rhs)
}

fn v0_system(coeffs: &RiccatiCoefficients, v1: &Mat, model: &LinearDiffusionModel, prefs: &Preferences) -> (Mat, Vector) {
    let lhs = v1 * &coeffs.m + coeffs.f.transpose();
    let rhs = &model.r1 * prefs.p - (model.mu1.transpose() - v1 * coeffs.upsilon.transpose()) * &coeffs.sigma_inv * &model.mu0 * prefs.q;
    (lhs, rhs)
}

/// `λ = pr₀ - (q/2)μ₀'Σ⁻¹μ₀ + ½v₀'Mv₀ - q v₀'Υ'Σ⁻¹μ₀ - ½tr(A v₁)`.
pub fn growth_rate(v0: &Vector, v1: &Mat, model: &LinearDiffusionModel, prefs: &Preferences) -> Result<f64> {
    let c = RiccatiCoefficients::new(model, prefs)?;
    Ok(growth_rate_with(&c, v0, v1, model, prefs))
}

fn growth_rate_with(c: &RiccatiCoefficients, v0: &Vector, v1: &Mat, model: &LinearDiffusionModel, prefs: &Preferences) -> f64 {
    let q = prefs.q;
    let mu0 = &model.mu0;
    prefs.p * model.r0 - 0.5 * q * mu0.dot(&(&c.sigma_inv * mu0)) + 0.5 * v0.dot(&(&c.m * v0))
        - q * v0.dot(&(c.upsilon.transpose() * &c.sigma_inv * mu0))
        - 0.5 * (&c.state_cov * v1).trace()
}

/// Complete long-run solution `(v₀, v₁, λ)` with diagnostics.
#[derive(Debug, Clone)]
pub struct ValueSolution {
    pub v0: Vector,
    pub v1: Mat,
    pub lambda: f64,
    pub residual_v1: f64,
    pub residual_v0: f64,
    /// Eigenvalues of `D = F + Mv₁`.
    pub stabilizing_spectrum: Vec<Complex<f64>>,
    /// Condition number of the `v₀` system matrix.
    pub condition_number: f64,
    pub method: RiccatiMethod,
}

impl ValueSolution {
    pub fn value(&self, y: &Vector) -> f64 {
        self.v0.dot(y) - 0.5 * y.dot(&(&self.v1 * y))
    }

    pub fn gradient(&self, y: &Vector) -> Vector {
        &self.v0 - &self.v1 * y
    }
}

pub fn solve_linear(model: &LinearDiffusionModel, prefs: &Preferences) -> Result<ValueSolution> {
    let root = solve_riccati(model, prefs)?;
    let coeffs = RiccatiCoefficients::new(model, prefs)?;
    let (lhs, rhs) = v0_system(&coeffs, &root.v1, model, prefs);
    let v0 = linalg::solve(&lhs, &rhs)?;
    let residual_v0 = (&lhs * &v0 - &rhs).norm();
    let lambda = growth_rate_with(&coeffs, &v0, &root.v1, model, prefs);
    Ok(ValueSolution {
        condition_number: linalg::condition_number(&lhs),
        v0,
        v1: root.v1,
        lambda,
        residual_v1: root.residual,
        residual_v0,
        stabilizing_spectrum: root.spectrum,
        method: root.method,
    })
}

/// `|LHS - λ|` of the ergodic HJB equation at `y` for the quadratic value
/// function carried by `vsol`.
pub fn pde_residual(vsol: &ValueSolution, model: &LinearDiffusionModel, prefs: &Preferences, y: &Vector) -> Result<f64> {
    let c = RiccatiCoefficients::new(model, prefs)?;
    let q = prefs.q;
    let mu = model.mu(y);
    let grad = vsol.gradient(y);
    let drift = -(&model.b * y) - c.upsilon.transpose() * &c.sigma_inv * &mu * q;
    let lhs = prefs.p * model.rate(y) - 0.5 * q * mu.dot(&(&c.sigma_inv * &mu)) + 0.5 * grad.dot(&(&c.m * &grad)) + grad.dot(&drift)
        - 0.5 * (&c.state_cov * &vsol.v1).trace();
    Ok((lhs - vsol.lambda).abs())
}

/// Long-run pair `π = Σ⁻¹(μ + Υ∇v)/(1-p)`, `η = ∇v`.
pub fn long_run_policy(model: &LinearDiffusionModel, prefs: &Preferences, vsol: &ValueSolution) -> Result<Policy> {
    let sigma_inv = linalg::inverse(&model.covariance())?;
    let ups = model.cross_covariance();
    let scale = 1.0 / (1.0 - prefs.p);
    let mut pol = Policy::zero(PolicyKind::LongRun, model.n(), model.k());
    pol.pi_const = &sigma_inv * (&model.mu0 + &ups * &vsol.v0) * scale;
    pol.pi_lin = &sigma_inv * (&model.mu1 - &ups * &vsol.v1) * scale;
    pol.eta_const = vsol.v0.clone();
    pol.eta_lin = -&vsol.v1;
    Ok(pol)
}

/// Drift of the state under the myopic probability, `intercept + slope·y`,
/// with `slope = -D`.
pub fn hatp_drift(model: &LinearDiffusionModel, prefs: &Preferences, vsol: &ValueSolution) -> Result<(Vector, Mat)> {
    let c = RiccatiCoefficients::new(model, prefs)?;
    let intercept = &c.m * &vsol.v0 - c.upsilon.transpose() * &c.sigma_inv * &model.mu0 * prefs.q;
    Ok((intercept, -c.closed_loop(&vsol.v1)))
}

/// Direction of the matrix Riccati flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowDirection {
    /// Backward in calendar time from the zero terminal value (the
    /// finite-horizon HJB flow); converges to the stabilizing root.
    Backward,
    /// The time-reversed flow; near the anti-stabilizing root it is attracting.
    Forward,
}

/// Integrates the matrix Riccati flow of the finite-horizon HJB quadratic
/// ansatz, `dW/dτ = Q - WMW - WF - F'W`, `W(0) = 0`, over `τ ∈ [0, T]` with
/// classical RK4 and returns `W(T)`.
pub fn differential_riccati_oracle(model: &LinearDiffusionModel, prefs: &Preferences, horizon: f64, steps: usize) -> Result<Mat> {
    riccati_flow(model, prefs, horizon, steps, FlowDirection::Backward, None)
}

pub fn riccati_flow(
    model: &LinearDiffusionModel,
    prefs: &Preferences,
    horizon: f64,
    steps: usize,
    direction: FlowDirection,
    start: Option<Mat>,
) -> Result<Mat> {
    if !(horizon > 0.0) || steps < 1000 {
        return Err(Error::Domain(format!("oracle needs T > 0 and steps >= 1000 (got T = {horizon}, steps = {steps})")));
    }
    let c = RiccatiCoefficients::new(model, prefs)?;
    let k = model.k();
    let sign = match direction {
        FlowDirection::Backward => -1.0,
        FlowDirection::Forward => 1.0,
    };
    let rhs = |w: &Mat| c.residual(w) * sign;
    let h = horizon / steps as f64;
    let mut w = start.unwrap_or_else(|| Mat::zeros(k, k));
    for i in 0..steps {
        let k1 = rhs(&w);
        let k2 = rhs(&(&w + &k1 * (0.5 * h)));
        let k3 = rhs(&(&w + &k2 * (0.5 * h)));
        let k4 = rhs(&(&w + &k3 * h));
        w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        w = linalg::symmetrize(&w);
        if w.iter().any(|v| !v.is_finite() || v.abs() > BLOW_UP_LEVEL) {
            return Err(Error::BlowUp { time: (i + 1) as f64 * h });
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KimOmbergModel;

    fn scalar_model(mu1: f64) -> LinearDiffusionModel {
        LinearDiffusionModel::new(
            Vector::from_element(1, 0.05),
            Mat::from_element(1, 1, mu1),
            Mat::from_element(1, 1, 0.2),
            Mat::from_element(1, 1, 0.3),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, -0.6),
            0.001,
            Vector::zeros(1),
        )
        .unwrap()
    }

    #[test]
    fn zero_predictability_gives_zero_v1() {
        let prefs = Preferences::new(-2.0).unwrap();
        let root = solve_riccati(&scalar_model(0.0), &prefs).unwrap();
        assert_eq!(root.v1.norm(), 0.0);
        assert!(root.spectrum.iter().all(|z| z.re > 0.0));
    }

    #[test]
    fn rejects_positive_p() {
        let prefs = Preferences::new(0.5).unwrap();
        assert!(matches!(solve_riccati(&scalar_model(0.1), &prefs), Err(Error::AssumptionViolation(_))));
    }

    #[test]
    fn homogeneous_v0_system() {
        let mut m = scalar_model(0.0);
        m.mu0 = Vector::zeros(1);
        let prefs = Preferences::new(-2.0).unwrap();
        let v0 = solve_v0(&Mat::zeros(1, 1), &m, &prefs).unwrap();
        assert_eq!(v0[0], 0.0);
    }

    #[test]
    fn pure_rate_growth() {
        let mut m = scalar_model(0.0);
        m.mu0 = Vector::zeros(1);
        let prefs = Preferences::new(-2.0).unwrap();
        let lam = growth_rate(&Vector::zeros(1), &Mat::zeros(1, 1), &m, &prefs).unwrap();
        assert!((lam - prefs.p * m.r0).abs() < 1e-15);
    }

    #[test]
    fn residual_of_unsolved_coefficients_is_quadratic() {
        let m = scalar_model(0.1);
        let prefs = Preferences::new(-2.0).unwrap();
        let vsol = ValueSolution {
            v0: Vector::zeros(1),
            v1: Mat::zeros(1, 1),
            lambda: 0.0,
            residual_v1: 0.0,
            residual_v0: 0.0,
            stabilizing_spectrum: vec![],
            condition_number: 1.0,
            method: RiccatiMethod::Newton,
        };
        let r: Vec<f64> =
            [0.0, 1.0, 2.0, 3.0].iter().map(|&y| pde_residual(&vsol, &m, &prefs, &Vector::from_element(1, y)).unwrap()).collect();
        assert!(r.iter().skip(1).any(|&x| x > 1e-6));
        // exact quadratic: third difference vanishes (signs fixed for y >= 0 here)
        let signed: Vec<f64> = [0.0, 1.0, 2.0, 3.0]
            .iter()
            .map(|&y| {
                let mu = 0.05 + 0.1 * y;
                let q = prefs.q;
                prefs.p * 0.001 - 0.5 * q * mu * mu / 0.04
            })
            .collect();
        let third = signed[3] - 3.0 * signed[2] + 3.0 * signed[1] - signed[0];
        assert!(third.abs() < 1e-14);
        for (a, b) in r.iter().zip(&signed) {
            assert!((a - b.abs()).abs() < 1e-14);
        }
    }

    #[test]
    fn scalar_matches_closed_form_root() {
        let ko = KimOmbergModel::with_kappa(
            Mat::from_element(1, 1, 0.0436),
            Vector::from_element(1, 0.0788),
            0.8944,
            0.0226,
            Vector::from_element(1, -0.935),
            0.0014,
        )
        .unwrap();
        let prefs = Preferences::new(-1.0).unwrap();
        let sol = solve_linear(&ko.to_linear().unwrap(), &prefs).unwrap();
        let q = prefs.q;
        let rr = ko.rho_sq();
        let delta = 1.0 / (1.0 - q * rr);
        let s = 1.0 + q * ko.rho.dot(&ko.nu1);
        let theta = s * s + q * ko.nu1.dot(&ko.nu1) / delta;
        let v1 = delta * ko.b * (theta.sqrt() - s);
        assert!((sol.v1[(0, 0)] - v1).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_short_runs() {
        let prefs = Preferences::new(-1.0).unwrap();
        assert!(differential_riccati_oracle(&scalar_model(0.1), &prefs, 10.0, 10).is_err());
    }

    #[test]
    fn oracle_zero_for_zero_predictability() {
        let prefs = Preferences::new(-1.0).unwrap();
        let w = differential_riccati_oracle(&scalar_model(0.0), &prefs, 100.0, 1000).unwrap();
        assert_eq!(w.norm(), 0.0);
    }
}
