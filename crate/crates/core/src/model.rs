//! Market models, preferences and affine policies.
//!
//! All rates and drifts are per month. Correlation is supplied as `rho`
//! directly and the cross covariation `Υ = σ ρ a'` is derived from it, so
//! `Υ'Σ⁻¹Υ ≤ A` holds by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Power-utility preferences `U(x) = x^p / p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    pub p: f64,
    /// Conjugate exponent `p / (p - 1)`.
    pub q: f64,
    /// Relative risk aversion `1 - p`.
    pub gamma: f64,
}

impl Preferences {
    pub fn new(p: f64) -> Result<Self> {
        if !p.is_finite() || p == 0.0 || p >= 1.0 {
            return Err(Error::Domain(format!("risk exponent p = {p} must satisfy p < 1, p != 0")));
        }
        Ok(Self { p, q: p / (p - 1.0), gamma: 1.0 - p })
    }

    /// `δ = 1 / (1 - q ρ'ρ)`.
    pub fn delta(&self, rho_sq: f64) -> Result<f64> {
        let denom = 1.0 - self.q * rho_sq;
        if denom == 0.0 || denom.abs() < 1e-15 {
            return Err(Error::SingularDelta { q_rho_sq: self.q * rho_sq });
        }
        Ok(1.0 / denom)
    }
}

pub fn make_preferences(p: f64) -> Result<Preferences> {
    Preferences::new(p)
}

pub fn delta_of(prefs: &Preferences, rho_sq: f64) -> Result<f64> {
    prefs.delta(rho_sq)
}

fn check_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} has non-finite entries")))
    }
}

fn check_correlation(rho: &Mat) -> Result<()> {
    let norm = linalg::max_sym_eigenvalue(&(rho * rho.transpose()));
    if norm > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("spectral norm of rho rho' is {norm} > 1")));
    }
    Ok(())
}

fn check_invertible(name: &str, m: &Mat) -> Result<()> {
    let cond = linalg::condition_number(m);
    if !cond.is_finite() || cond > 1e14 {
        return Err(Error::Domain(format!("{name} is singular (condition {cond:e})")));
    }
    Ok(())
}

/// Multivariate linear diffusion: returns with drift `μ₀ + μ₁ y`, an
/// Ornstein–Uhlenbeck state `dY = -bY dt + a dW` and rate `r₀ + r₁'y`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearDiffusionModel {
    pub mu0: Vector,
    pub mu1: Mat,
    pub sigma: Mat,
    pub b: Mat,
    pub a: Mat,
    pub rho: Mat,
    pub r0: f64,
    pub r1: Vector,
}

impl LinearDiffusionModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(mu0: Vector, mu1: Mat, sigma: Mat, b: Mat, a: Mat, rho: Mat, r0: f64, r1: Vector) -> Result<Self> {
        let m = Self { mu0, mu1, sigma, b, a, rho, r0, r1 };
        m.check_structure()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.mu0.len()
    }

    pub fn k(&self) -> usize {
        self.b.nrows()
    }

    /// Dimensions, finiteness, invertible σ and a valid correlation block.
    pub fn check_structure(&self) -> Result<()> {
        let (n, k) = (self.n(), self.k());
        if n == 0 || k == 0 {
            return Err(Error::Dimension("model needs n >= 1 assets and k >= 1 states".into()));
        }
        let shapes = [
            ("mu1", self.mu1.shape(), (n, k)),
            ("sigma", self.sigma.shape(), (n, n)),
            ("b", self.b.shape(), (k, k)),
            ("a", self.a.shape(), (k, k)),
            ("rho", self.rho.shape(), (n, k)),
            ("r1", (self.r1.len(), 1), (k, 1)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::Dimension(format!("{name} has shape {got:?}, expected {want:?}")));
            }
        }
        check_finite("mu0", self.mu0.as_slice())?;
        check_finite("mu1", self.mu1.as_slice())?;
        check_finite("sigma", self.sigma.as_slice())?;
        check_finite("b", self.b.as_slice())?;
        check_finite("a", self.a.as_slice())?;
        check_finite("rho", self.rho.as_slice())?;
        check_finite("r1", self.r1.as_slice())?;
        check_finite("r0", &[self.r0])?;
        check_invertible("sigma", &self.sigma)?;
        check_correlation(&self.rho)
    }

    /// `Σ, μ₁'μ₁, b + b'` and `a` positive definite.
    pub fn check_assumptions(&self) -> Result<()> {
        let checks = [
            ("Sigma = sigma sigma'", self.covariance()),
            ("mu1' mu1", self.mu1.transpose() * &self.mu1),
            ("b + b'", &self.b + self.b.transpose()),
            ("a", self.a.clone()),
        ];
        for (name, m) in checks {
            if !linalg::is_positive_definite(&m) {
                return Err(Error::AssumptionViolation(format!(
                    "{name} is not positive definite (linear diffusion requires all four matrices positive definite)"
                )));
            }
        }
        Ok(())
    }

    /// `Σ = σσ'`.
    pub fn covariance(&self) -> Mat {
        &self.sigma * self.sigma.transpose()
    }

    /// `A = aa'`.
    pub fn state_covariance(&self) -> Mat {
        &self.a * self.a.transpose()
    }

    /// `Υ = σρa'`.
    pub fn cross_covariance(&self) -> Mat {
        &self.sigma * &self.rho * self.a.transpose()
    }

    pub fn mu(&self, y: &Vector) -> Vector {
        &self.mu0 + &self.mu1 * y
    }

    pub fn rate(&self, y: &Vector) -> f64 {
        self.r0 + self.r1.dot(y)
    }
}

/// Single-state OU model with `μ(y) = σν₀ + bσν₁ y`, `a = 1`, `r₁ = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct KimOmbergModel {
    pub sigma: Mat,
    pub nu0: Vector,
    pub nu1: Vector,
    pub b: f64,
    pub rho: Vector,
    pub r0: f64,
}

impl KimOmbergModel {
    pub fn new(sigma: Mat, nu0: Vector, nu1: Vector, b: f64, rho: Vector, r0: f64) -> Result<Self> {
        let m = Self { sigma, nu0, nu1, b, rho, r0 };
        m.check_structure()?;
        Ok(m)
    }

    /// The `ν₁ = -κρ` parameterization.
    pub fn with_kappa(sigma: Mat, nu0: Vector, kappa: f64, b: f64, rho: Vector, r0: f64) -> Result<Self> {
        let nu1 = &rho * (-kappa);
        Self::new(sigma, nu0, nu1, b, rho, r0)
    }

    pub fn n(&self) -> usize {
        self.nu0.len()
    }

    pub fn check_structure(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Dimension("model needs at least one asset".into()));
        }
        if self.sigma.shape() != (n, n) || self.nu1.len() != n || self.rho.len() != n {
            return Err(Error::Dimension(format!("Kim-Omberg model vectors must have length {n}, sigma {n}x{n}")));
        }
        check_finite("sigma", self.sigma.as_slice())?;
        check_finite("nu0", self.nu0.as_slice())?;
        check_finite("nu1", self.nu1.as_slice())?;
        check_finite("rho", self.rho.as_slice())?;
        check_finite("b, r0", &[self.b, self.r0])?;
        check_invertible("sigma", &self.sigma)?;
        if self.rho_sq() > 1.0 + 1e-12 {
            return Err(Error::Domain(format!("rho'rho = {} > 1", self.rho_sq())));
        }
        Ok(())
    }

    /// Positive mean reversion and `ν₁ ≠ 0` (so `μ₁'μ₁ > 0`). With `ν₁ = 0`
    /// the opportunity set is constant and only `b > 0` is required.
    pub fn check_assumptions(&self) -> Result<()> {
        if self.nu1.iter().all(|&x| x == 0.0) {
            if !(self.b > 0.0) {
                return Err(Error::AssumptionViolation(format!("mean reversion b = {} must be positive", self.b)));
            }
            return Ok(());
        }
        self.to_linear()?.check_assumptions()
    }

    pub fn rho_sq(&self) -> f64 {
        self.rho.dot(&self.rho)
    }

    /// κ when `ν₁` is collinear with `ρ` as `ν₁ = -κρ`.
    pub fn kappa(&self) -> Option<f64> {
        let rr = self.rho_sq();
        if rr == 0.0 {
            return None;
        }
        let kappa = -self.nu1.dot(&self.rho) / rr;
        let resid = (&self.nu1 + &self.rho * kappa).norm();
        (resid <= 1e-12 * (1.0 + self.nu1.norm())).then_some(kappa)
    }

    pub fn covariance(&self) -> Mat {
        &self.sigma * self.sigma.transpose()
    }

    pub fn mu(&self, y: f64) -> Vector {
        &self.sigma * (&self.nu0 + &self.nu1 * (self.b * y))
    }

    pub fn to_linear(&self) -> Result<LinearDiffusionModel> {
        let n = self.n();
        LinearDiffusionModel::new(
            &self.sigma * &self.nu0,
            Mat::from_column_slice(n, 1, (&self.sigma * &self.nu1 * self.b).as_slice()),
            self.sigma.clone(),
            Mat::from_element(1, 1, self.b),
            Mat::from_element(1, 1, 1.0),
            Mat::from_column_slice(n, 1, self.rho.as_slice()),
            self.r0,
            Vector::zeros(1),
        )
    }
}

/// Square-root state `dY = b(θ - Y)dt + a√Y dW` driving rates, drifts and
/// volatilities: `μ(y) = σ(ν₀ + ν₁ y)`, `Σ(y) = y σσ'`, `r = r₀ + r₁ y`.
#[derive(Debug, Clone, PartialEq)]
pub struct CirModel {
    pub sigma: Mat,
    pub nu0: Vector,
    pub nu1: Vector,
    pub b: f64,
    pub theta: f64,
    pub a: f64,
    pub rho: Vector,
    pub r0: f64,
    pub r1: f64,
}

impl CirModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(sigma: Mat, nu0: Vector, nu1: Vector, b: f64, theta: f64, a: f64, rho: Vector, r0: f64, r1: f64) -> Result<Self> {
        let m = Self { sigma, nu0, nu1, b, theta, a, rho, r0, r1 };
        m.check_structure()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.nu0.len()
    }

    pub fn check_structure(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::Dimension("model needs at least one asset".into()));
        }
        if self.sigma.shape() != (n, n) || self.nu1.len() != n || self.rho.len() != n {
            return Err(Error::Dimension(format!("CIR model vectors must have length {n}, sigma {n}x{n}")));
        }
        check_finite("sigma", self.sigma.as_slice())?;
        check_finite("nu0", self.nu0.as_slice())?;
        check_finite("nu1", self.nu1.as_slice())?;
        check_finite("rho", self.rho.as_slice())?;
        check_finite("scalars", &[self.b, self.theta, self.a, self.r0, self.r1])?;
        check_invertible("sigma", &self.sigma)?;
        if self.rho_sq() > 1.0 + 1e-12 {
            return Err(Error::Domain(format!("rho'rho = {} > 1", self.rho_sq())));
        }
        Ok(())
    }

    /// `b, θ, a, r₁ ≥ 0` and the Feller condition `bθ > a²/2`.
    pub fn check_assumptions(&self) -> Result<()> {
        if self.b < 0.0 || self.theta < 0.0 || self.a < 0.0 || self.r1 < 0.0 {
            return Err(Error::AssumptionViolation("CIR assumption requires b, theta, a, r1 >= 0".into()));
        }
        if self.b * self.theta <= 0.5 * self.a * self.a {
            return Err(Error::AssumptionViolation(format!(
                "CIR assumption requires b*theta > a^2/2 (b*theta = {}, a^2/2 = {})",
                self.b * self.theta,
                0.5 * self.a * self.a
            )));
        }
        Ok(())
    }

    pub fn rho_sq(&self) -> f64 {
        self.rho.dot(&self.rho)
    }

    /// `c = bθ - a²/2`.
    pub fn c(&self) -> f64 {
        self.b * self.theta - 0.5 * self.a * self.a
    }

    pub fn rate(&self, y: f64) -> f64 {
        self.r0 + self.r1 * y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MarketModel {
    Linear(LinearDiffusionModel),
    KimOmberg(KimOmbergModel),
    Cir(CirModel),
}

impl MarketModel {
    pub fn n(&self) -> usize {
        match self {
            MarketModel::Linear(m) => m.n(),
            MarketModel::KimOmberg(m) => m.n(),
            MarketModel::Cir(m) => m.n(),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            MarketModel::Linear(m) => m.k(),
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MarketModel::Linear(_) => "linear",
            MarketModel::KimOmberg(_) => "kim_omberg",
            MarketModel::Cir(_) => "cir",
        }
    }

    pub fn check_structure(&self) -> Result<()> {
        match self {
            MarketModel::Linear(m) => m.check_structure(),
            MarketModel::KimOmberg(m) => m.check_structure(),
            MarketModel::Cir(m) => m.check_structure(),
        }
    }

    pub fn check_assumptions(&self) -> Result<()> {
        match self {
            MarketModel::Linear(m) => m.check_assumptions(),
            MarketModel::KimOmberg(m) => m.check_assumptions(),
            MarketModel::Cir(m) => m.check_assumptions(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    LongRun,
    Myopic,
    AffineCustom,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::LongRun => "long_run",
            PolicyKind::Myopic => "myopic",
            PolicyKind::AffineCustom => "custom",
        }
    }
}

/// Portfolio and risk premia affine in the state, plus `1/y` terms for
/// square-root models:
///
/// ```text
/// π(y) = pi_const + pi_lin y + pi_inv / y
/// η(y) = eta_const + eta_lin y + eta_inv / y
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub kind: PolicyKind,
    pub pi_const: Vector,
    pub pi_lin: Mat,
    pub pi_inv: Vector,
    pub eta_const: Vector,
    pub eta_lin: Mat,
    pub eta_inv: Vector,
    /// State domain is `(0, ∞)`; the `1/y` terms are only used here.
    pub positive_domain: bool,
}

impl Policy {
    pub fn zero(kind: PolicyKind, n: usize, k: usize) -> Self {
        Self {
            kind,
            pi_const: Vector::zeros(n),
            pi_lin: Mat::zeros(n, k),
            pi_inv: Vector::zeros(n),
            eta_const: Vector::zeros(k),
            eta_lin: Mat::zeros(k, k),
            eta_inv: Vector::zeros(k),
            positive_domain: false,
        }
    }

    pub fn n(&self) -> usize {
        self.pi_const.len()
    }

    pub fn k(&self) -> usize {
        self.eta_const.len()
    }

    /// Affine in `y` (no `1/y` terms).
    pub fn is_affine(&self) -> bool {
        self.pi_inv.iter().all(|&x| x == 0.0) && self.eta_inv.iter().all(|&x| x == 0.0)
    }

    pub fn evaluate(&self, y: &Vector) -> Result<(Vector, Vector)> {
        if y.len() != self.k() {
            return Err(Error::Dimension(format!("state has length {}, policy expects {}", y.len(), self.k())));
        }
        let mut pi = &self.pi_const + &self.pi_lin * y;
        let mut eta = &self.eta_const + &self.eta_lin * y;
        if self.positive_domain {
            let y0 = y[0];
            if !(y0 > 0.0) {
                return Err(Error::Domain(format!("state y = {y0} outside (0, inf)")));
            }
            pi += &self.pi_inv / y0;
            eta += &self.eta_inv / y0;
        }
        Ok((pi, eta))
    }

    /// Scalar-state convenience wrapper.
    pub fn evaluate_scalar(&self, y: f64) -> Result<(Vector, Vector)> {
        self.evaluate(&Vector::from_element(1, y))
    }
}

pub fn evaluate_policy(policy: &Policy, y: &Vector) -> Result<(Vector, Vector)> {
    policy.evaluate(y)
}

/// `π(y) = Σ(y)⁻¹μ(y) / (1 - p)` with zero risk premia.
pub fn myopic_policy(model: &MarketModel, prefs: &Preferences) -> Result<Policy> {
    let scale = 1.0 / (1.0 - prefs.p);
    match model {
        MarketModel::Linear(m) => linear_myopic(m, scale),
        MarketModel::KimOmberg(m) => linear_myopic(&m.to_linear()?, scale),
        MarketModel::Cir(m) => {
            // Σ(y)⁻¹μ(y) = (σ')⁻¹(ν₀/y + ν₁)
            let st_inv = linalg::inverse(&m.sigma.transpose())?;
            let mut pol = Policy::zero(PolicyKind::Myopic, m.n(), 1);
            pol.positive_domain = true;
            pol.pi_inv = &st_inv * &m.nu0 * scale;
            pol.pi_const = &st_inv * &m.nu1 * scale;
            Ok(pol)
        }
    }
}

fn linear_myopic(m: &LinearDiffusionModel, scale: f64) -> Result<Policy> {
    let sig_inv = linalg::inverse(&m.covariance())?;
    let mut pol = Policy::zero(PolicyKind::Myopic, m.n(), m.k());
    pol.pi_const = &sig_inv * &m.mu0 * scale;
    pol.pi_lin = &sig_inv * &m.mu1 * scale;
    Ok(pol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_exponents() {
        for (p, q, g) in [(-1.0, 0.5, 2.0), (-4.0, 0.8, 5.0), (0.5, -1.0, 0.5)] {
            let prefs = make_preferences(p).unwrap();
            assert_eq!(prefs.q, q);
            assert_eq!(prefs.gamma, g);
        }
    }

    #[test]
    fn rejects_bad_exponents() {
        for p in [0.0, 1.0, 2.0, f64::NAN] {
            assert!(matches!(make_preferences(p), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn delta_values() {
        let half = make_preferences(-1.0).unwrap();
        assert_eq!(delta_of(&half, 0.0).unwrap(), 1.0);
        assert_eq!(delta_of(&half, 1.0).unwrap(), 2.0);
        let p4 = make_preferences(-4.0).unwrap();
        assert!((delta_of(&p4, 0.9375).unwrap() - 4.0).abs() < 1e-12);
        let q_one = Preferences { p: f64::NEG_INFINITY, q: 1.0, gamma: f64::INFINITY };
        assert!(matches!(q_one.delta(1.0), Err(Error::SingularDelta { .. })));
    }

    fn ko() -> KimOmbergModel {
        KimOmbergModel::with_kappa(
            Mat::from_element(1, 1, 0.0436),
            Vector::from_element(1, 0.0788),
            0.8944,
            0.0226,
            Vector::from_element(1, -0.935),
            0.0014,
        )
        .unwrap()
    }

    #[test]
    fn myopic_calibration_scalar() {
        let prefs = make_preferences(-1.0).unwrap();
        let pol = myopic_policy(&MarketModel::KimOmberg(ko()), &prefs).unwrap();
        let (pi, eta) = pol.evaluate_scalar(0.0).unwrap();
        assert!((pi[0] - 0.0788 / (2.0 * 0.0436)).abs() < 1e-12);
        assert!((pi[0] - 0.9037).abs() < 1e-4);
        assert_eq!(eta[0], 0.0);
    }

    #[test]
    fn myopic_ou_coefficients() {
        let m = ko();
        let prefs = make_preferences(-2.0).unwrap();
        let pol = myopic_policy(&MarketModel::KimOmberg(m.clone()), &prefs).unwrap();
        let sig_inv = m.covariance().try_inverse().unwrap();
        let want_lin = &sig_inv * &m.sigma * &m.nu1 * (m.b / 3.0);
        let want_const = &sig_inv * &m.sigma * &m.nu0 / 3.0;
        assert!((pol.pi_lin.column(0) - want_lin).norm() < 1e-12);
        assert!((&pol.pi_const - want_const).norm() < 1e-12);
    }

    #[test]
    fn cir_policy_rejects_nonpositive_state() {
        let m = CirModel::new(
            Mat::from_element(1, 1, 0.2),
            Vector::from_element(1, 0.1),
            Vector::from_element(1, 0.3),
            0.5,
            0.1,
            0.2,
            Vector::from_element(1, -0.5),
            0.01,
            0.02,
        )
        .unwrap();
        let prefs = make_preferences(-2.0).unwrap();
        let pol = myopic_policy(&MarketModel::Cir(m), &prefs).unwrap();
        assert!(matches!(pol.evaluate_scalar(0.0), Err(Error::Domain(_))));
        assert!(pol.evaluate_scalar(0.1).is_ok());
    }

    #[test]
    fn kappa_recovered() {
        assert!((ko().kappa().unwrap() - 0.8944).abs() < 1e-12);
    }

    #[test]
    fn structure_rejects_bad_correlation() {
        let r = KimOmbergModel::new(
            Mat::from_element(1, 1, 0.1),
            Vector::from_element(1, 0.1),
            Vector::from_element(1, 0.1),
            0.1,
            Vector::from_element(1, 1.2),
            0.0,
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
