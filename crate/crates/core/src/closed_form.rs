//! Closed-form long-run solutions for the single-state models.
//!
//! Ornstein–Uhlenbeck (Kim–Omberg) state: `v(y) = v₀y - ½v₁y²` with
//!
//! ```text
//! s = 1 + qρ'ν₁,   Θ = s² + qν₁'ν₁/δ,   v₁ = δb(√Θ - s)
//! v₀ = qδρ'ν₀ - (qν₁'ν₀ + qδρ'ν₀ s)/√Θ
//! λ  = pr₀ - ½qν₀'ν₀ + ½v₀²/δ - qv₀ρ'ν₀ - ½v₁
//! ```
//!
//! Square-root state: `v(y) = v₀ log y + v₁y` with `c = bθ - a²/2`,
//!
//! ```text
//! Θ = (b + qaρ'ν₁)² + (a²/δ)(qν₁'ν₁ - 2pr₁)     v₁ = (δ/a²)(b + qaρ'ν₁ - √Θ)
//! Λ = (c - qaρ'ν₀)² + (a²/δ)qν₀'ν₀              v₀ = (δ/a²)(√Λ - (c - qaρ'ν₀))
//! λ = pr₀ - qν₀'ν₁ + (a²/δ)v₀v₁ - v₀(b + qaρ'ν₁) + v₁(bθ - qaρ'ν₀)
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::model::{CirModel, KimOmbergModel, Policy, PolicyKind, Preferences};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuSolution {
    pub theta: f64,
    pub v1: f64,
    pub v0: f64,
    pub lambda: f64,
    pub delta: f64,
    /// Mean-reversion speed under the myopic probability, `b√Θ`.
    pub hat_kappa: f64,
    /// Long-run mean under the myopic probability.
    pub hat_mean: f64,
    /// Set for `0 < p < 1`, where tightness is not established by the
    /// closed form alone.
    pub unverified_tightness: bool,
}

impl OuSolution {
    pub fn value(&self, y: f64) -> f64 {
        self.v0 * y - 0.5 * self.v1 * y * y
    }

    pub fn gradient(&self, y: f64) -> f64 {
        self.v0 - self.v1 * y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CirSolution {
    pub theta: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    pub c: f64,
    pub v0: f64,
    pub v1: f64,
    pub lambda: f64,
    pub delta: f64,
}

impl CirSolution {
    pub fn value(&self, y: f64) -> f64 {
        self.v0 * y.ln() + self.v1 * y
    }

    pub fn gradient(&self, y: f64) -> f64 {
        self.v0 / y + self.v1
    }
}

/// `√(x² + y)` without cancellation when `y ≥ 0`.
fn root_sum(x: f64, y: f64) -> f64 {
    if y >= 0.0 {
        x.hypot(y.sqrt())
    } else {
        (x * x + y).sqrt()
    }
}

/// `δ(√(s² + y/δ) - s)` written as `y/(√· + s)` when that avoids cancellation.
fn root_difference(s: f64, y: f64, root: f64, delta: f64) -> f64 {
    if s > 0.0 {
        y / (root + s)
    } else {
        delta * (root - s)
    }
}

pub fn solve_ou_1d(model: &KimOmbergModel, prefs: &Preferences) -> Result<OuSolution> {
    model.check_structure()?;
    let q = prefs.q;
    let b = model.b;
    let rho_sq = model.rho_sq();
    let delta = prefs.delta(rho_sq)?;
    let rho_nu0 = model.rho.dot(&model.nu0);
    let rho_nu1 = model.rho.dot(&model.nu1);
    let nu1_sq = model.nu1.dot(&model.nu1);
    let nu10 = model.nu1.dot(&model.nu0);

    let s = 1.0 + q * rho_nu1;
    let extra = q * nu1_sq / delta;
    let theta = s * s + extra;
    if theta < 0.0 {
        return Err(Error::NegativeDiscriminant(theta));
    }
    let root = root_sum(s, extra);
    let v1 = b * root_difference(s, q * nu1_sq, root, delta);
    let v0 = q * delta * rho_nu0 - (q * nu10 + q * delta * rho_nu0 * s) / root;
    let lambda = prefs.p * model.r0 - 0.5 * q * model.nu0.dot(&model.nu0) + 0.5 * v0 * v0 / delta - q * v0 * rho_nu0 - 0.5 * v1;
    let hat_kappa = b * root;
    let hat_mean = (v0 / delta - q * rho_nu0) / hat_kappa;
    Ok(OuSolution { theta, v1, v0, lambda, delta, hat_kappa, hat_mean, unverified_tightness: prefs.p > 0.0 })
}

pub fn solve_cir(model: &CirModel, prefs: &Preferences) -> Result<CirSolution> {
    if prefs.p >= 0.0 {
        return Err(Error::AssumptionViolation("the square-root closed form is only established for p < 0".into()));
    }
    model.check_assumptions()?;
    let q = prefs.q;
    let a2 = model.a * model.a;
    let delta = prefs.delta(model.rho_sq())?;
    let c = model.c();
    let s = model.b + q * model.a * model.rho.dot(&model.nu1);
    let t = c - q * model.a * model.rho.dot(&model.nu0);
    let theta_extra = (a2 / delta) * (q * model.nu1.dot(&model.nu1) - 2.0 * prefs.p * model.r1);
    let lambda_extra = (a2 / delta) * q * model.nu0.dot(&model.nu0);
    let theta = s * s + theta_extra;
    let big_lambda = t * t + lambda_extra;
    if theta < 0.0 {
        return Err(Error::NegativeDiscriminant(theta));
    }
    if big_lambda < 0.0 {
        return Err(Error::NegativeDiscriminant(big_lambda));
    }
    let rt = root_sum(s, theta_extra);
    let rl = root_sum(t, lambda_extra);
    // -√Θ branch for v₁, +√Λ branch for v₀
    let v1 = -(delta / a2) * root_difference(s, theta_extra, rt, 1.0);
    let v0 = (delta / a2) * root_difference(t, lambda_extra, rl, 1.0);
    let lambda = cir_lambda(model, prefs, delta, v0, v1);
    Ok(CirSolution { theta, big_lambda, c, v0, v1, lambda, delta })
}

fn cir_lambda(model: &CirModel, prefs: &Preferences, delta: f64, v0: f64, v1: f64) -> f64 {
    let q = prefs.q;
    let a = model.a;
    prefs.p * model.r0 - q * model.nu0.dot(&model.nu1) + (a * a / delta) * v0 * v1 - v0 * (model.b + q * a * model.rho.dot(&model.nu1))
        + v1 * (model.b * model.theta - q * a * model.rho.dot(&model.nu0))
}

/// One of the four sign choices of the square-root solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CirBranch {
    /// Sign in front of `√Θ` in `v₁`.
    pub theta_sign: i8,
    /// Sign in front of `√Λ` in `v₀`.
    pub lambda_sign: i8,
    pub v0: f64,
    pub v1: f64,
    pub lambda: f64,
    /// The branch returned by [`solve_cir`].
    pub selected: bool,
}

/// All four candidate solutions of the square-root model. Diagnostic listing
/// only; the optimizer is the `(-√Θ, +√Λ)` branch.
pub fn cir_candidate_branches(model: &CirModel, prefs: &Preferences) -> Result<Vec<CirBranch>> {
    let sol = solve_cir(model, prefs)?;
    let q = prefs.q;
    let a2 = model.a * model.a;
    let s = model.b + q * model.a * model.rho.dot(&model.nu1);
    let t = sol.c - q * model.a * model.rho.dot(&model.nu0);
    let mut out = Vec::with_capacity(4);
    for theta_sign in [-1i8, 1] {
        for lambda_sign in [1i8, -1] {
            let v1 = (sol.delta / a2) * (s + theta_sign as f64 * sol.theta.sqrt());
            let v0 = (sol.delta / a2) * (-t + lambda_sign as f64 * sol.big_lambda.sqrt());
            let selected = theta_sign == -1 && lambda_sign == 1;
            let (v0, v1) = if selected { (sol.v0, sol.v1) } else { (v0, v1) };
            out.push(CirBranch { theta_sign, lambda_sign, v0, v1, lambda: cir_lambda(model, prefs, sol.delta, v0, v1), selected });
        }
    }
    Ok(out)
}

/// Ergodic HJB residual `LHS - λ` for the OU model at state `y`.
pub fn ou_residual(model: &KimOmbergModel, prefs: &Preferences, v0: f64, v1: f64, lambda: f64, y: f64) -> f64 {
    let q = prefs.q;
    let nu = &model.nu0 + &model.nu1 * (model.b * y);
    let grad = v0 - v1 * y;
    let m = 1.0 - q * model.rho_sq();
    prefs.p * model.r0 - 0.5 * q * nu.dot(&nu) + 0.5 * m * grad * grad + grad * (-model.b * y - q * model.rho.dot(&nu)) - 0.5 * v1 - lambda
}

/// Ergodic HJB residual `LHS - λ` for the square-root model at `y > 0`.
pub fn cir_residual(model: &CirModel, prefs: &Preferences, v0: f64, v1: f64, lambda: f64, y: f64) -> f64 {
    let q = prefs.q;
    let a2 = model.a * model.a;
    let nu = &model.nu0 + &model.nu1 * y;
    let grad = v0 / y + v1;
    let hess = -v0 / (y * y);
    let big_a = a2 * y;
    let m = big_a * (1.0 - q * model.rho_sq());
    let drift = model.b * (model.theta - y) - q * model.a * model.rho.dot(&nu);
    prefs.p * model.rate(y) - 0.5 * q * nu.dot(&nu) / y + 0.5 * m * grad * grad + grad * drift + 0.5 * big_a * hess - lambda
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    PhysicalP,
    MyopicPhat,
    QOptimal,
}

/// State drift `intercept + slope·y` under one of the measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineDrift {
    pub intercept: f64,
    pub slope: f64,
}

impl AffineDrift {
    /// Mean-reversion speed `-slope`.
    pub fn speed(&self) -> f64 {
        -self.slope
    }

    /// Long-run level `intercept / speed`.
    pub fn level(&self) -> f64 {
        self.intercept / self.speed()
    }

    pub fn at(&self, y: f64) -> f64 {
        self.intercept + self.slope * y
    }
}

pub fn ou_measure_dynamics(model: &KimOmbergModel, prefs: &Preferences, sol: &OuSolution, which: Measure) -> AffineDrift {
    let b = model.b;
    let rho_nu0 = model.rho.dot(&model.nu0);
    let rho_nu1 = model.rho.dot(&model.nu1);
    match which {
        Measure::PhysicalP => AffineDrift { intercept: 0.0, slope: -b },
        Measure::MyopicPhat => AffineDrift { intercept: sol.v0 / sol.delta - prefs.q * rho_nu0, slope: -sol.hat_kappa },
        Measure::QOptimal => {
            let orth = 1.0 - model.rho_sq();
            AffineDrift { intercept: -rho_nu0 + orth * sol.v0, slope: -b - b * rho_nu1 - orth * sol.v1 }
        }
    }
}

pub fn cir_measure_dynamics(model: &CirModel, prefs: &Preferences, sol: &CirSolution, which: Measure) -> AffineDrift {
    let a = model.a;
    match which {
        Measure::PhysicalP => AffineDrift { intercept: model.b * model.theta, slope: -model.b },
        Measure::MyopicPhat => AffineDrift { intercept: 0.5 * a * a + sol.big_lambda.sqrt(), slope: -sol.theta.sqrt() },
        Measure::QOptimal => {
            let orth = a * a * (1.0 - model.rho_sq());
            let _ = prefs;
            AffineDrift {
                intercept: model.b * model.theta - a * model.rho.dot(&model.nu0) + orth * sol.v0,
                slope: -model.b - a * model.rho.dot(&model.nu1) + orth * sol.v1,
            }
        }
    }
}

/// Long-run pair for the OU model, `π = Σ⁻¹(μ + Υ v'(y))/(1-p)`, `η = v'(y)`.
pub fn ou_long_run_policy(model: &KimOmbergModel, prefs: &Preferences, sol: &OuSolution) -> Result<Policy> {
    let st_inv = linalg::inverse(&model.sigma.transpose())?;
    let scale = 1.0 / (1.0 - prefs.p);
    let n = model.n();
    let mut pol = Policy::zero(PolicyKind::LongRun, n, 1);
    // Σ⁻¹σ x = (σ')⁻¹ x
    let c: Vector = &st_inv * (&model.nu0 + &model.rho * sol.v0) * scale;
    let l: Vector = &st_inv * (&model.nu1 * model.b - &model.rho * sol.v1) * scale;
    pol.pi_const = c;
    pol.pi_lin.set_column(0, &l);
    pol.eta_const[0] = sol.v0;
    pol.eta_lin[(0, 0)] = -sol.v1;
    Ok(pol)
}

/// Long-run pair for the square-root model,
/// `π = (σ')⁻¹[(ν₀ + aρv₀)/y + ν₁ + aρv₁]/(1-p)`, `η = v₀/y + v₁`.
pub fn cir_long_run_policy(model: &CirModel, prefs: &Preferences, sol: &CirSolution) -> Result<Policy> {
    let st_inv = linalg::inverse(&model.sigma.transpose())?;
    let scale = 1.0 / (1.0 - prefs.p);
    let mut pol = Policy::zero(PolicyKind::LongRun, model.n(), 1);
    pol.positive_domain = true;
    pol.pi_inv = &st_inv * (&model.nu0 + &model.rho * (model.a * sol.v0)) * scale;
    pol.pi_const = &st_inv * (&model.nu1 + &model.rho * (model.a * sol.v1)) * scale;
    pol.eta_inv[0] = sol.v0;
    pol.eta_const[0] = sol.v1;
    Ok(pol)
}
