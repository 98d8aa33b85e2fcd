//! Monte Carlo engines for the single-state models.
//!
//! Every path draws from its own ChaCha8 stream selected by
//! `(seed, path_index)`, so estimates are bit-identical whether paths run
//! on one thread or many.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Poisson, StandardNormal};
use serde::Serialize;

use crate::closed_form::{self, AffineDrift, Measure};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::model::{MarketModel, Policy, Preferences};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExactTransition,
    FullTruncationEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Euler step in months.
    pub dt: f64,
    pub seed: u64,
    pub scheme: Scheme,
    /// Run paths on the rayon pool (ignored without the `parallel` feature).
    pub parallel: bool,
    /// Pair path `2j + 1` with path `2j` using negated normals.
    pub antithetic: bool,
}

impl SimConfig {
    pub fn new(n_paths: usize, dt: f64, seed: u64) -> Result<Self> {
        let cfg = Self { n_paths, dt, seed, scheme: Scheme::ExactTransition, parallel: true, antithetic: false };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::Domain("n_paths must be at least 1".into()));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Domain(format!("dt = {} must be positive", self.dt)));
        }
        Ok(())
    }

    /// Stream and normal sign for a path.
    fn stream(&self, index: usize) -> (ChaCha8Rng, f64) {
        if self.antithetic {
            let sign = if index % 2 == 1 { -1.0 } else { 1.0 };
            (path_rng(self.seed, (index / 2) as u64), sign)
        } else {
            (path_rng(self.seed, index as u64), 1.0)
        }
    }
}

/// Independent generator for one path: the ChaCha stream number is the
/// path index, the key comes from `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub ci95: (f64, f64),
    /// Largest single-path share of `Σ|f|`.
    pub max_share: f64,
    pub warning: Option<String>,
}

impl McEstimate {
    /// `|mean - target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.std_error
    }
}

pub const MAX_SHARE_WARNING: f64 = 0.1;

pub fn mc_estimate(draws: &[f64], transform: impl Fn(f64) -> f64) -> Result<McEstimate> {
    let n = draws.len();
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 draws, got {n}")));
    }
    let vals: Vec<f64> = draws.iter().map(|&x| transform(x)).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("transformed sample has non-finite values".into()));
    }
    let mean = par::pairwise_sum(&vals) / n as f64;
    let sq: Vec<f64> = vals.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = par::pairwise_sum(&sq) / (n - 1) as f64;
    if var == 0.0 && n < 10 {
        return Err(Error::DegenerateSample { n });
    }
    let std_error = (var / n as f64).sqrt();
    let abs: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
    let total = par::pairwise_sum(&abs);
    let max_share = if total > 0.0 { abs.iter().cloned().fold(0.0, f64::max) / total } else { 0.0 };
    let warning = (max_share > MAX_SHARE_WARNING)
        .then(|| format!("one path carries {:.1}% of the estimate; heavy tails make it unreliable", 100.0 * max_share));
    Ok(McEstimate { mean, std_error, n, ci95: (mean - 1.96 * std_error, mean + 1.96 * std_error), max_share, warning })
}

/// Single-state dynamics `dY = (intercept + slope·Y)dt + vol(Y) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StateDynamics {
    /// Constant volatility.
    Ou { drift: AffineDrift, vol: f64 },
    /// Volatility `a√Y`.
    SquareRoot { drift: AffineDrift, a: f64 },
}

/// State dynamics of a single-state model under the requested measure.
pub fn state_dynamics(model: &MarketModel, prefs: &Preferences, measure: Measure) -> Result<StateDynamics> {
    match model {
        MarketModel::KimOmberg(m) => {
            let sol = closed_form::solve_ou_1d(m, prefs)?;
            Ok(StateDynamics::Ou { drift: closed_form::ou_measure_dynamics(m, prefs, &sol, measure), vol: 1.0 })
        }
        MarketModel::Cir(m) => {
            let drift = if measure == Measure::PhysicalP {
                AffineDrift { intercept: m.b * m.theta, slope: -m.b }
            } else {
                let sol = closed_form::solve_cir(m, prefs)?;
                closed_form::cir_measure_dynamics(m, prefs, &sol, measure)
            };
            Ok(StateDynamics::SquareRoot { drift, a: m.a })
        }
        MarketModel::Linear(_) => Err(Error::Domain("state sampling supports the single-state models".into())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalDraws {
    pub draws: Vec<f64>,
    /// Euler steps at which the square-root state was truncated at zero.
    pub clamped: usize,
}

/// `(1 - e^{-κT})/κ`, continuous at `κ = 0`.
fn decay_integral(kappa: f64, t: f64) -> f64 {
    if kappa.abs() * t < 1e-12 {
        t
    } else {
        -(-kappa * t).exp_m1() / kappa
    }
}

fn ou_exact(drift: AffineDrift, vol: f64, y0: f64, t: f64, z: f64) -> f64 {
    let kappa = drift.speed();
    let decay = (-kappa * t).exp();
    let mean = y0 * decay + drift.intercept * decay_integral(kappa, t);
    let var = vol * vol * decay_integral(2.0 * kappa, t);
    mean + var.sqrt() * z
}

fn cir_exact(drift: AffineDrift, a: f64, y0: f64, t: f64, rng: &mut ChaCha8Rng) -> Result<f64> {
    let kappa = drift.speed();
    let c = a * a * decay_integral(kappa, t) / 4.0;
    let dof = 4.0 * drift.intercept / (a * a);
    let nc = y0 * (-kappa * t).exp() / c;
    let extra = if nc > 0.0 {
        let pois = Poisson::new(nc / 2.0).map_err(|e| Error::Domain(e.to_string()))?;
        2.0 * pois.sample(rng)
    } else {
        0.0
    };
    let chi = ChiSquared::new(dof + extra).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(c * chi.sample(rng))
}

/// Draws of `Y_T` given `Y_0 = y0`.
pub fn sample_terminal(dynamics: &StateDynamics, y0: f64, t: f64, cfg: &SimConfig) -> Result<TerminalDraws> {
    cfg.validate()?;
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("horizon {t} must be nonnegative")));
    }
    if let StateDynamics::SquareRoot { drift, .. } = dynamics {
        if !(y0 > 0.0) || drift.intercept < 0.0 {
            return Err(Error::Domain("square-root state needs y0 > 0 and a nonnegative intercept".into()));
        }
    }
    if t == 0.0 {
        return Ok(TerminalDraws { draws: vec![y0; cfg.n_paths], clamped: 0 });
    }
    let results: Vec<Result<(f64, usize)>> = par::map_indices(cfg.n_paths, cfg.parallel, |i| {
        let (mut rng, sign) = cfg.stream(i);
        match (cfg.scheme, dynamics) {
            (Scheme::ExactTransition, StateDynamics::Ou { drift, vol }) => {
                let z: f64 = rng.sample(StandardNormal);
                Ok((ou_exact(*drift, *vol, y0, t, sign * z), 0))
            }
            (Scheme::ExactTransition, StateDynamics::SquareRoot { drift, a }) => Ok((cir_exact(*drift, *a, y0, t, &mut rng)?, 0)),
            (Scheme::FullTruncationEuler, dynamics) => Ok(euler_path(dynamics, y0, t, cfg.dt, &mut rng, sign)),
        }
    });
    let mut draws = Vec::with_capacity(cfg.n_paths);
    let mut clamped = 0;
    for r in results {
        let (y, c) = r?;
        draws.push(y);
        clamped += c;
    }
    Ok(TerminalDraws { draws, clamped })
}

fn euler_path(dynamics: &StateDynamics, y0: f64, t: f64, dt: f64, rng: &mut ChaCha8Rng, sign: f64) -> (f64, usize) {
    let steps = (t / dt).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let sh = h.sqrt();
    let mut y = y0;
    let mut clamped = 0;
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        match dynamics {
            StateDynamics::Ou { drift, vol } => y += drift.at(y) * h + vol * sh * sign * z,
            StateDynamics::SquareRoot { drift, a } => {
                if y < 0.0 {
                    clamped += 1;
                }
                let yp = y.max(0.0);
                y += drift.at(yp) * h + a * yp.sqrt() * sh * sign * z;
            }
        }
    }
    let y = match dynamics {
        StateDynamics::SquareRoot { .. } => y.max(0.0),
        StateDynamics::Ou { .. } => y,
    };
    (y, clamped)
}

pub fn sample_state_terminal(
    model: &MarketModel,
    prefs: &Preferences,
    measure: Measure,
    y0: f64,
    t: f64,
    cfg: &SimConfig,
) -> Result<TerminalDraws> {
    sample_terminal(&state_dynamics(model, prefs, measure)?, y0, t, cfg)
}

/// Terminal log wealth `log X^π_T` and log discount factor `log M^η_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthSdfPaths {
    pub log_wealth: Vec<f64>,
    pub log_sdf: Vec<f64>,
    pub aborted: usize,
}

pub const MAX_ABORTED_FRACTION: f64 = 1e-3;

/// Per-state market quantities of a single-state model.
struct OneStateMarket {
    sigma_t: Mat,
    rho: Vector,
    rho_bar: Mat,
    kind: MarketKind,
}

enum MarketKind {
    Ou { nu0: Vector, nu1_b: Vector, b: f64, r0: f64 },
    Cir { nu0: Vector, nu1: Vector, b: f64, theta: f64, a: f64, r0: f64, r1: f64 },
}

/// Floor for evaluating `1/y` terms after full truncation.
const CIR_STATE_FLOOR: f64 = 1e-10;

impl OneStateMarket {
    fn new(model: &MarketModel) -> Result<Self> {
        let (sigma, rho, kind) = match model {
            MarketModel::KimOmberg(m) => {
                (m.sigma.clone(), m.rho.clone(), MarketKind::Ou { nu0: m.nu0.clone(), nu1_b: &m.nu1 * m.b, b: m.b, r0: m.r0 })
            }
            MarketModel::Cir(m) => (
                m.sigma.clone(),
                m.rho.clone(),
                MarketKind::Cir { nu0: m.nu0.clone(), nu1: m.nu1.clone(), b: m.b, theta: m.theta, a: m.a, r0: m.r0, r1: m.r1 },
            ),
            MarketModel::Linear(_) => {
                return Err(Error::Domain("wealth simulation supports the single-state models".into()));
            }
        };
        let n = rho.len();
        let rho_bar = linalg::spd_sqrt(&(Mat::identity(n, n) - &rho * rho.transpose()))?;
        Ok(Self { sigma_t: sigma.transpose(), rho, rho_bar, kind })
    }

    /// `(r, market price of risk S⁻¹μ, state drift, state vol, vol scale s
    /// with S = sσ, evaluation state)`.
    fn at(&self, y: f64) -> (f64, Vector, f64, f64, f64, f64) {
        match &self.kind {
            MarketKind::Ou { nu0, nu1_b, b, r0 } => (*r0, nu0 + nu1_b * y, -b * y, 1.0, 1.0, y),
            MarketKind::Cir { nu0, nu1, b, theta, a, r0, r1 } => {
                let yp = y.max(0.0);
                let ye = y.max(CIR_STATE_FLOOR);
                let sy = ye.sqrt();
                (r0 + r1 * ye, (nu0 + nu1 * ye) / sy, b * (theta - yp), a * yp.sqrt(), sy, ye)
            }
        }
    }
}

/// Joint Euler–Maruyama simulation of `(Y, log X^π, log M^η)` with
/// `dZ = ρ dW + ρ̄ dB`. Risk premia come from the policy's `η` part.
pub fn simulate_wealth_and_sdf(model: &MarketModel, policy: &Policy, y0: f64, t: f64, cfg: &SimConfig) -> Result<WealthSdfPaths> {
    cfg.validate()?;
    if cfg.dt > 0.25 {
        return Err(Error::Domain(format!("wealth simulation needs dt <= 0.25 months, got {}", cfg.dt)));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("horizon {t} must be positive")));
    }
    let market = OneStateMarket::new(model)?;
    if policy.n() != market.rho.len() || policy.k() != 1 {
        return Err(Error::Dimension("policy does not match the model".into()));
    }
    let n = market.rho.len();
    let steps = (t / cfg.dt).ceil() as usize;
    let h = t / steps as f64;
    let sh = h.sqrt();

    let paths: Vec<Option<(f64, f64)>> = par::map_indices(cfg.n_paths, cfg.parallel, |i| {
        let (mut rng, sign) = cfg.stream(i);
        let mut y = y0;
        let mut log_x = 0.0;
        let mut log_m = 0.0;
        let mut db = Vector::zeros(n);
        for _ in 0..steps {
            let (r, mpr, state_drift, state_vol, s, ye) = market.at(y);
            let (pi, eta) = policy.evaluate_scalar(ye).ok()?;
            let dw = sign * sh * rng.sample::<f64, _>(StandardNormal);
            for j in 0..n {
                db[j] = sign * sh * rng.sample::<f64, _>(StandardNormal);
            }
            // wealth exposure φ = S'π
            let phi = &market.sigma_t * &pi * s;
            let phi_w = market.rho.dot(&phi);
            let phi_b = market.rho_bar.transpose() * &phi;
            log_x += (r + phi.dot(&mpr) - 0.5 * phi.norm_squared()) * h + phi_w * dw + phi_b.dot(&db);
            // discount factor exposure u'dZ + η state_vol dW with u = -(S⁻¹μ + ρ·state_vol·η)
            let u = -(&mpr + &market.rho * (state_vol * eta[0]));
            let m_w = market.rho.dot(&u) + state_vol * eta[0];
            let m_b = market.rho_bar.transpose() * &u;
            log_m += (-r - 0.5 * (m_w * m_w + m_b.norm_squared())) * h + m_w * dw + m_b.dot(&db);
            y += state_drift * h + state_vol * dw;
            if !(y.is_finite() && log_x.is_finite() && log_m.is_finite()) {
                return None;
            }
        }
        Some((log_x, log_m))
    });

    let aborted = paths.iter().filter(|p| p.is_none()).count();
    if aborted as f64 > MAX_ABORTED_FRACTION * cfg.n_paths as f64 {
        return Err(Error::NonFiniteState { aborted, total: cfg.n_paths });
    }
    let (log_wealth, log_sdf) = paths.into_iter().flatten().unzip();
    Ok(WealthSdfPaths { log_wealth, log_sdf, aborted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CirModel, KimOmbergModel, PolicyKind};

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
    fn constant_draws_have_zero_error() {
        let est = mc_estimate(&[2.0; 20], |x| x).unwrap();
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.mean, 2.0);
        assert!(matches!(mc_estimate(&[1.0; 5], |x| x), Err(Error::DegenerateSample { n: 5 })));
    }

    #[test]
    fn zero_horizon_returns_start() {
        let cfg = SimConfig::new(10, 0.1, 1).unwrap();
        let d = sample_state_terminal(&MarketModel::KimOmberg(ko()), &Preferences::new(-1.0).unwrap(), Measure::MyopicPhat, 0.3, 0.0, &cfg)
            .unwrap();
        assert!(d.draws.iter().all(|&y| y == 0.3));
    }

    #[test]
    fn streams_are_order_independent() {
        let mut cfg = SimConfig::new(2000, 0.1, 7).unwrap();
        let prefs = Preferences::new(-1.0).unwrap();
        let model = MarketModel::KimOmberg(ko());
        let a = sample_state_terminal(&model, &prefs, Measure::MyopicPhat, 0.0, 12.0, &cfg).unwrap();
        cfg.parallel = false;
        let b = sample_state_terminal(&model, &prefs, Measure::MyopicPhat, 0.0, 12.0, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn antithetic_pairs_mirror() {
        let mut cfg = SimConfig::new(4, 0.1, 3).unwrap();
        cfg.antithetic = true;
        let dynamics = StateDynamics::Ou { drift: AffineDrift { intercept: 0.0, slope: -0.5 }, vol: 1.0 };
        let d = sample_terminal(&dynamics, 0.0, 1.0, &cfg).unwrap();
        assert_eq!(d.draws[0], -d.draws[1]);
        assert_eq!(d.draws[2], -d.draws[3]);
    }

    #[test]
    fn cir_stays_positive() {
        let m = CirModel::new(
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
        .unwrap();
        let cfg = SimConfig::new(5000, 0.01, 11).unwrap();
        let prefs = Preferences::new(-2.0).unwrap();
        let d = sample_state_terminal(&MarketModel::Cir(m), &prefs, Measure::PhysicalP, 0.1, 20.0, &cfg).unwrap();
        assert!(d.draws.iter().all(|&y| y > 0.0));
        let est = mc_estimate(&d.draws, |y| y).unwrap();
        assert!(est.z_score(0.1) < 4.0, "{est:?}");
    }

    #[test]
    fn riskless_wealth_is_exact() {
        let m = ko();
        let pol = Policy::zero(PolicyKind::AffineCustom, 1, 1);
        let cfg = SimConfig::new(8, 0.25, 5).unwrap();
        let paths = simulate_wealth_and_sdf(&MarketModel::KimOmberg(m), &pol, 0.0, 12.0, &cfg).unwrap();
        for lx in paths.log_wealth {
            assert!((lx - 0.0014 * 12.0).abs() < 1e-14);
        }
    }
}
