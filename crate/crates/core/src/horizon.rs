//! Finite-horizon performance of time-homogeneous policies.
//!
//! For the long-run pair the primal and dual values reduce to moments of the
//! state under the myopic probability:
//!
//! ```text
//! E[X_T^p]           = e^{λT + v(y)} E_P̂[e^{-v(Y_T)}]
//! E[M_T^q]^{1-p}     = e^{λT + v(y)} E_P̂[e^{-v(Y_T)/(1-p)}]^{1-p}
//! ```
//!
//! and the certainty-equivalent loss of a policy is bounded by
//! `l_T ≤ (1/p)((1/T) log dual - (1/T) log primal)`.
//!
//! For an affine policy in the OU model `E[X_T^p] = exp(A + By₀ + Cy₀²)`
//! where `(A, B, C)` solve a scalar Riccati system in time-to-go `τ`.

use serde::Serialize;

use crate::closed_form::{self, Measure, OuSolution};
use crate::error::{Error, Result};
use crate::model::{myopic_policy, KimOmbergModel, MarketModel, Policy, PolicyKind, Preferences};
use crate::par;
use crate::simulate::{self, McEstimate, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianLaw {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianLaw {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::Domain(format!("variance {variance} must be nonnegative")));
        }
        Ok(Self { mean, variance })
    }
}

/// `log E[exp(AX² + BX)]` for `X ~ law`; `+∞` when `A ≥ 1/(2σ²)`.
pub fn log_gaussian_exp_quad_moment(law: &GaussianLaw, a: f64, b: f64) -> f64 {
    let (m, s2) = (law.mean, law.variance);
    let d = 1.0 - 2.0 * a * s2;
    if d <= 0.0 {
        return f64::INFINITY;
    }
    -0.5 * d.ln() + (m * m * a + m * b + 0.5 * s2 * b * b) / d
}

pub fn gaussian_exp_quad_moment(law: &GaussianLaw, a: f64, b: f64) -> f64 {
    log_gaussian_exp_quad_moment(law, a, b).exp()
}

/// Law of `Y_T` under the myopic probability for the OU model.
pub fn ou_hatp_law(sol: &OuSolution, y0: f64, t: f64) -> Result<GaussianLaw> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("horizon {t} must be nonnegative")));
    }
    let k = sol.hat_kappa;
    let decay = (-k * t).exp();
    let mean = y0 * decay + sol.hat_mean * (-(-k * t).exp_m1());
    let variance = -(-2.0 * k * t).exp_m1() / (2.0 * k);
    GaussianLaw::new(mean, variance)
}

/// Primal and dual values of the long-run pair, kept in logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonBounds {
    /// `log E[(X_T)^p]`, `+∞` when the moment is infinite.
    pub log_primal: f64,
    /// `log E[(M_T)^q]^{1-p}`.
    pub log_dual: f64,
}

impl HorizonBounds {
    pub fn primal(&self) -> f64 {
        self.log_primal.exp()
    }

    pub fn dual(&self) -> f64 {
        self.log_dual.exp()
    }

    /// Bound on the certainty-equivalent loss per month.
    pub fn cel_bound(&self, p: f64, t: f64) -> f64 {
        (self.log_dual - self.log_primal) / (p * t)
    }

    /// Duality in utility terms, `(1/p)·dual ≥ (1/p)·primal`, within a
    /// relative tolerance.
    pub fn satisfies_duality(&self, p: f64, rel_tol: f64) -> bool {
        if !(self.log_primal.is_finite() && self.log_dual.is_finite()) {
            return true;
        }
        let gap = if p < 0.0 { self.log_primal - self.log_dual } else { self.log_dual - self.log_primal };
        gap >= (1.0 - rel_tol).ln()
    }
}

pub fn finite_horizon_bounds(model: &KimOmbergModel, sol: &OuSolution, prefs: &Preferences, y0: f64, t: f64) -> Result<HorizonBounds> {
    let _ = model;
    let law = ou_hatp_law(sol, y0, t)?;
    let g = 1.0 - prefs.p;
    let base = sol.lambda * t + sol.value(y0);
    let log_primal = base + log_gaussian_exp_quad_moment(&law, 0.5 * sol.v1, -sol.v0);
    let log_dual = base + g * log_gaussian_exp_quad_moment(&law, 0.5 * sol.v1 / g, -sol.v0 / g);
    Ok(HorizonBounds { log_primal, log_dual })
}

/// Monte Carlo version for the square-root model: exact draws of `Y_T`
/// under the myopic probability. Estimates are of `primal` and `dual`
/// themselves (not logs); the dual error uses the delta method.
pub fn finite_horizon_bounds_mc(
    model: &crate::model::CirModel,
    prefs: &Preferences,
    y0: f64,
    t: f64,
    cfg: &SimConfig,
) -> Result<(McEstimate, McEstimate)> {
    let sol = closed_form::solve_cir(model, prefs)?;
    let dynamics = simulate::StateDynamics::SquareRoot {
        drift: closed_form::cir_measure_dynamics(model, prefs, &sol, Measure::MyopicPhat),
        a: model.a,
    };
    let draws = simulate::sample_terminal(&dynamics, y0, t, cfg)?.draws;
    let g = 1.0 - prefs.p;
    let scale = (sol.lambda * t + sol.value(y0)).exp();
    let mut primal = simulate::mc_estimate(&draws, |y| (-sol.value(y)).exp())?;
    let inner = simulate::mc_estimate(&draws, |y| (-sol.value(y) / g).exp())?;
    rescale(&mut primal, scale);
    let mean = inner.mean.powf(g);
    let se = g * inner.mean.powf(g - 1.0) * inner.std_error;
    let mut dual = McEstimate {
        mean,
        std_error: se,
        n: inner.n,
        ci95: (mean - 1.96 * se, mean + 1.96 * se),
        max_share: inner.max_share,
        warning: inner.warning,
    };
    rescale(&mut dual, scale);
    Ok((primal, dual))
}

fn rescale(est: &mut McEstimate, c: f64) {
    est.mean *= c;
    est.std_error *= c;
    est.ci95 = (est.ci95.0 * c, est.ci95.1 * c);
}

/// Value of `E[(X_T)^p]` from the Feynman–Kac system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerMoment {
    /// `log E[(X_T)^p]`; `+∞` past a blow-up.
    pub log_value: f64,
    /// Time-to-go at which `C(τ)` exploded.
    pub blow_up_time: Option<f64>,
}

impl PowerMoment {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// Coefficients of the Feynman–Kac system for an affine policy.
#[derive(Debug, Clone, Copy, PartialEq)]
struct AffineSystem {
    kappa0: f64,
    kappa1: f64,
    alpha: [f64; 3],
}

impl AffineSystem {
    fn new(model: &KimOmbergModel, policy: &Policy, prefs: &Preferences) -> Result<Self> {
        if !policy.is_affine() || policy.positive_domain {
            return Err(Error::Domain("the Feynman–Kac evaluator needs a policy affine in y".into()));
        }
        if policy.n() != model.n() || policy.k() != 1 {
            return Err(Error::Dimension("policy does not match the model".into()));
        }
        let p = prefs.p;
        let sigma = &model.sigma;
        let cov = model.covariance();
        let pi0 = &policy.pi_const;
        let pi1 = policy.pi_lin.column(0).into_owned();
        let mu0 = sigma * &model.nu0;
        let mu1 = sigma * &model.nu1 * model.b;
        let sr = sigma * &model.rho;
        let h = 0.5 * p * (1.0 - p);
        Ok(Self {
            kappa0: p * pi0.dot(&sr),
            kappa1: -model.b + p * pi1.dot(&sr),
            alpha: [
                p * model.r0 + p * pi0.dot(&mu0) - h * pi0.dot(&(&cov * pi0)),
                p * (pi0.dot(&mu1) + pi1.dot(&mu0)) - 2.0 * h * pi0.dot(&(&cov * &pi1)),
                p * pi1.dot(&mu1) - h * pi1.dot(&(&cov * &pi1)),
            ],
        })
    }

    fn rhs(&self, s: [f64; 3]) -> [f64; 3] {
        let [a, b, c] = s;
        let _ = a;
        [
            c + 0.5 * b * b + self.kappa0 * b + self.alpha[0],
            2.0 * b * c + self.kappa1 * b + 2.0 * self.kappa0 * c + self.alpha[1],
            2.0 * c * c + 2.0 * self.kappa1 * c + self.alpha[2],
        ]
    }

    fn rk4_step(&self, s: [f64; 3], h: f64) -> [f64; 3] {
        let add = |x: [f64; 3], k: [f64; 3], f: f64| [x[0] + f * k[0], x[1] + f * k[1], x[2] + f * k[2]];
        let k1 = self.rhs(s);
        let k2 = self.rhs(add(s, k1, 0.5 * h));
        let k3 = self.rhs(add(s, k2, 0.5 * h));
        let k4 = self.rhs(add(s, k3, h));
        [
            s[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            s[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
            s[2] + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        ]
    }

    /// Integrates to each horizon in `sorted` (ascending) with at most `h_max`
    /// per step; returns `(A, B, C)` or a blow-up time.
    fn integrate(&self, sorted: &[f64], h_max: f64) -> Vec<std::result::Result<[f64; 3], f64>> {
        let mut out = Vec::with_capacity(sorted.len());
        let mut s = [0.0; 3];
        let mut tau = 0.0;
        let mut blown: Option<f64> = None;
        for &target in sorted {
            if let Some(tb) = blown {
                out.push(Err(tb));
                continue;
            }
            let span = target - tau;
            let steps = (span / h_max).ceil().max(0.0) as usize;
            let h = if steps > 0 { span / steps as f64 } else { 0.0 };
            for i in 0..steps {
                s = self.rk4_step(s, h);
                if !s.iter().all(|x| x.is_finite()) || s[2].abs() > BLOW_UP_LEVEL {
                    blown = Some(tau + (i + 1) as f64 * h);
                    break;
                }
            }
            match blown {
                Some(tb) => out.push(Err(tb)),
                None => {
                    tau = target;
                    out.push(Ok(s));
                }
            }
        }
        out
    }
}

const BLOW_UP_LEVEL: f64 = 1e12;
const STEP_TOLERANCE: f64 = 1e-6;

fn moments_at(sys: &AffineSystem, horizons: &[f64], y0: f64, h_max: f64) -> Vec<PowerMoment> {
    sys.integrate(horizons, h_max)
        .into_iter()
        .map(|r| match r {
            Ok([a, b, c]) => PowerMoment { log_value: a + b * y0 + c * y0 * y0, blow_up_time: None },
            Err(tb) => PowerMoment { log_value: f64::INFINITY, blow_up_time: Some(tb) },
        })
        .collect()
}

fn check_halving(coarse: &[PowerMoment], fine: &[PowerMoment]) -> Result<()> {
    for (c, f) in coarse.iter().zip(fine) {
        if c.log_value.is_finite() && f.log_value.is_finite() {
            let rel = (f.log_value - c.log_value).exp_m1().abs();
            if rel > STEP_TOLERANCE {
                return Err(Error::StepTooCoarse { relative_change: rel });
            }
        }
    }
    Ok(())
}

/// `E_P[(X^π_T)^p]` for an affine policy in the OU model, integrated with
/// `steps` RK4 steps and checked against `2·steps`.
pub fn expected_power_utility_affine(
    model: &KimOmbergModel,
    policy: &Policy,
    prefs: &Preferences,
    y0: f64,
    t: f64,
    steps: usize,
) -> Result<PowerMoment> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("horizon {t} must be positive")));
    }
    if steps < 100 {
        return Err(Error::Domain(format!("need at least 100 steps, got {steps}")));
    }
    let sys = AffineSystem::new(model, policy, prefs)?;
    let h = t / steps as f64;
    let coarse = moments_at(&sys, &[t], y0, h);
    let fine = moments_at(&sys, &[t], y0, 0.5 * h);
    check_halving(&coarse, &fine)?;
    Ok(fine[0])
}

/// The same evaluation at many horizons from a single integration, with at
/// most `h_max` months per step.
pub fn power_utility_curve(
    model: &KimOmbergModel,
    policy: &Policy,
    prefs: &Preferences,
    y0: f64,
    horizons: &[f64],
    h_max: f64,
) -> Result<Vec<PowerMoment>> {
    if horizons.windows(2).any(|w| w[1] < w[0]) || horizons.first().is_some_and(|&t| !(t > 0.0)) {
        return Err(Error::Domain("horizons must be positive and ascending".into()));
    }
    let sys = AffineSystem::new(model, policy, prefs)?;
    let coarse = moments_at(&sys, horizons, y0, h_max);
    let fine = moments_at(&sys, horizons, y0, 0.5 * h_max);
    check_halving(&coarse, &fine)?;
    Ok(fine)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonCurve {
    pub horizons: Vec<f64>,
    pub primal_log_growth: Vec<f64>,
    pub dual_log_growth: Vec<f64>,
    pub cel_bound: Vec<f64>,
    pub cel_bound_annual: Vec<f64>,
    pub policy_name: String,
    pub blow_up_at: Option<f64>,
}

/// Default RK4 step (months) for curve evaluation.
pub const CURVE_STEP: f64 = 0.05;

/// CEL bound curve for `policy`. The dual side always uses the long-run
/// risk premia. OU curves are deterministic; square-root curves need `mc`.
pub fn cel_curve(
    model: &MarketModel,
    prefs: &Preferences,
    y0: f64,
    horizons: &[f64],
    policy: &Policy,
    mc: Option<&SimConfig>,
) -> Result<HorizonCurve> {
    let (log_primal, log_dual): (Vec<f64>, Vec<f64>) = match model {
        MarketModel::KimOmberg(m) => {
            let sol = closed_form::solve_ou_1d(m, prefs)?;
            let primal = power_utility_curve(m, policy, prefs, y0, horizons, CURVE_STEP)?;
            let mut dual = Vec::with_capacity(horizons.len());
            for &t in horizons {
                dual.push(finite_horizon_bounds(m, &sol, prefs, y0, t)?.log_dual);
            }
            (primal.iter().map(|pm| pm.log_value).collect(), dual)
        }
        MarketModel::Cir(m) => {
            let cfg = mc.ok_or_else(|| Error::Config("square-root curves need Monte Carlo settings".into()))?;
            let mut primal = Vec::with_capacity(horizons.len());
            let mut dual = Vec::with_capacity(horizons.len());
            for &t in horizons {
                let paths = simulate::simulate_wealth_and_sdf(model, policy, y0, t, cfg)?;
                let est = simulate::mc_estimate(&paths.log_wealth, |lx| (prefs.p * lx).exp())?;
                primal.push(est.mean.ln());
                let (_, d) = finite_horizon_bounds_mc(m, prefs, y0, t, cfg)?;
                dual.push(d.mean.ln());
            }
            (primal, dual)
        }
        MarketModel::Linear(_) => return Err(Error::Domain("curves support the single-state models".into())),
    };
    Ok(assemble_curve(horizons, &log_primal, &log_dual, prefs.p, policy.kind.name()))
}

fn assemble_curve(horizons: &[f64], log_primal: &[f64], log_dual: &[f64], p: f64, name: &str) -> HorizonCurve {
    let mut curve = HorizonCurve {
        horizons: horizons.to_vec(),
        primal_log_growth: Vec::with_capacity(horizons.len()),
        dual_log_growth: Vec::with_capacity(horizons.len()),
        cel_bound: Vec::with_capacity(horizons.len()),
        cel_bound_annual: Vec::with_capacity(horizons.len()),
        policy_name: name.to_string(),
        blow_up_at: None,
    };
    for ((&t, &lp), &ld) in horizons.iter().zip(log_primal).zip(log_dual) {
        if !lp.is_finite() && curve.blow_up_at.is_none() {
            curve.blow_up_at = Some(t);
        }
        let cel = (ld / t - lp / t) / p;
        curve.primal_log_growth.push(lp / t);
        curve.dual_log_growth.push(ld / t);
        curve.cel_bound.push(cel);
        curve.cel_bound_annual.push(12.0 * cel);
    }
    curve
}

/// Long-run and myopic curves of the OU model, evaluated on independent
/// workers.
pub fn ou_policy_curves(
    model: &KimOmbergModel,
    prefs: &Preferences,
    y0: f64,
    horizons: &[f64],
    parallel: bool,
) -> Result<(HorizonCurve, HorizonCurve)> {
    let sol = closed_form::solve_ou_1d(model, prefs)?;
    let lr = closed_form::ou_long_run_policy(model, prefs, &sol)?;
    let my = myopic_policy(&MarketModel::KimOmberg(model.clone()), prefs)?;
    let mm = MarketModel::KimOmberg(model.clone());
    let policies = [lr, my];
    let mut out = par::map_indices(2, parallel, |i| cel_curve(&mm, prefs, y0, horizons, &policies[i], None));
    let my = out.pop().expect("two curves")?;
    let lr = out.pop().expect("two curves")?;
    Ok((lr, my))
}

/// Difference `cel(long-run) - cel(myopic)` at horizon `t`.
fn cel_gap(model: &KimOmbergModel, prefs: &Preferences, y0: f64, t: f64, lr: &Policy, my: &Policy, sol: &OuSolution) -> Result<f64> {
    let dual = finite_horizon_bounds(model, sol, prefs, y0, t)?.log_dual;
    let steps = ((t / CURVE_STEP).ceil() as usize).max(100);
    let plr = expected_power_utility_affine(model, lr, prefs, y0, t, steps)?.log_value;
    let pmy = expected_power_utility_affine(model, my, prefs, y0, t, steps)?.log_value;
    Ok(((dual - plr) - (dual - pmy)) / (prefs.p * t))
}

pub const BREAK_EVEN_RANGE: (f64, f64) = (1.0, 1200.0);

/// Smallest horizon (months) at which the long-run policy's CEL bound is no
/// larger than the myopic policy's: a monthly scan for the first crossing,
/// then bisection.
pub fn break_even_horizon(model: &KimOmbergModel, prefs: &Preferences, y0: f64) -> Result<f64> {
    let sol = closed_form::solve_ou_1d(model, prefs)?;
    let lr = closed_form::ou_long_run_policy(model, prefs, &sol)?;
    let my = myopic_policy(&MarketModel::KimOmberg(model.clone()), prefs)?;
    let (lo, hi) = BREAK_EVEN_RANGE;
    let grid: Vec<f64> = (lo as usize..=hi as usize).map(|m| m as f64).collect();
    let lr_curve = power_utility_curve(model, &lr, prefs, y0, &grid, CURVE_STEP)?;
    let my_curve = power_utility_curve(model, &my, prefs, y0, &grid, CURVE_STEP)?;
    // the dual term cancels in the difference
    let gap = |i: usize| (my_curve[i].log_value - lr_curve[i].log_value) / (prefs.p * grid[i]);
    let first = (0..grid.len()).find(|&i| gap(i) <= 0.0);
    match first {
        None => Err(Error::NoBracket { lo, hi }),
        Some(0) => Ok(grid[0]),
        Some(i) => {
            let (mut a, mut b) = (grid[i - 1], grid[i]);
            for _ in 0..40 {
                let mid = 0.5 * (a + b);
                if cel_gap(model, prefs, y0, mid, &lr, &my, &sol)? <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
                if b - a < 1e-6 {
                    break;
                }
            }
            Ok(b)
        }
    }
}

/// Zero policy in the OU model.
pub fn riskless_policy(n: usize) -> Policy {
    Policy::zero(PolicyKind::AffineCustom, n, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Mat, Vector};

    fn calibration(kappa: f64) -> KimOmbergModel {
        KimOmbergModel::with_kappa(
            Mat::from_element(1, 1, 0.0436),
            Vector::from_element(1, 0.0788),
            kappa,
            0.0226,
            Vector::from_element(1, -0.935),
            0.0014,
        )
        .unwrap()
    }

    #[test]
    fn moment_edge_cases() {
        let law = GaussianLaw::new(0.3, 2.0).unwrap();
        assert_eq!(gaussian_exp_quad_moment(&law, 0.0, 0.0), 1.0);
        let mgf = (0.3 * 0.7 + 0.5 * 2.0 * 0.49_f64).exp();
        assert!((gaussian_exp_quad_moment(&law, 0.0, 0.7) / mgf - 1.0).abs() < 1e-14);
        assert_eq!(gaussian_exp_quad_moment(&law, 0.25, 0.1), f64::INFINITY);
    }

    #[test]
    fn hatp_law_limits() {
        let prefs = Preferences::new(-1.0).unwrap();
        let sol = closed_form::solve_ou_1d(&calibration(0.8944), &prefs).unwrap();
        let l0 = ou_hatp_law(&sol, 0.4, 0.0).unwrap();
        assert_eq!((l0.mean, l0.variance), (0.4, 0.0));
        let linf = ou_hatp_law(&sol, 0.4, 1e6).unwrap();
        assert!((linf.mean - sol.hat_mean).abs() < 1e-12);
        assert!((linf.variance - 0.5 / sol.hat_kappa).abs() < 1e-9);
    }

    #[test]
    fn riskless_policy_grows_at_rate() {
        let prefs = Preferences::new(-1.0).unwrap();
        let m = calibration(0.8944);
        let v = expected_power_utility_affine(&m, &riskless_policy(1), &prefs, 0.5, 60.0, 1000).unwrap();
        assert!((v.log_value - prefs.p * 0.0014 * 60.0).abs() < 1e-13);
    }

    #[test]
    fn ode_matches_gaussian_identity() {
        let prefs = Preferences::new(-1.0).unwrap();
        let m = calibration(0.8944);
        let sol = closed_form::solve_ou_1d(&m, &prefs).unwrap();
        let lr = closed_form::ou_long_run_policy(&m, &prefs, &sol).unwrap();
        for t in [1.0, 12.0, 120.0] {
            let ode = expected_power_utility_affine(&m, &lr, &prefs, 0.7, t, 2000).unwrap();
            let closed = finite_horizon_bounds(&m, &sol, &prefs, 0.7, t).unwrap();
            assert!((ode.log_value - closed.log_primal).exp_m1().abs() < 1e-9, "T = {t}");
            assert!(closed.satisfies_duality(prefs.p, 1e-9));
        }
    }

    #[test]
    fn zero_value_function_has_zero_loss() {
        let prefs = Preferences::new(-2.0).unwrap();
        let m = calibration(0.0);
        let sol = closed_form::solve_ou_1d(&m, &prefs).unwrap();
        let b = finite_horizon_bounds(&m, &sol, &prefs, 0.0, 24.0).unwrap();
        assert!((b.log_primal - sol.lambda * 24.0).abs() < 1e-14);
        assert!(b.cel_bound(prefs.p, 24.0).abs() < 1e-15);
    }
}
