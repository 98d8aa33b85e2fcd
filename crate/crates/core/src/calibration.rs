//! The single-state calibration in monthly units and the risk-aversion
//! threshold of the `κ` condition.

use crate::error::{Error, Result};
use crate::linalg::{Mat, Vector};
use crate::model::{KimOmbergModel, Preferences};
use crate::optimality::{self, VerdictStatus};

pub const RHO: f64 = -0.935;
pub const R0: f64 = 0.0014;
pub const SIGMA: f64 = 0.0436;
pub const NU0: f64 = 0.0788;
pub const KAPPA: f64 = 0.8944;
pub const B: f64 = 0.0226;

pub fn calibration_model() -> KimOmbergModel {
    KimOmbergModel::with_kappa(Mat::from_element(1, 1, SIGMA), Vector::from_element(1, NU0), KAPPA, B, Vector::from_element(1, RHO), R0)
        .expect("embedded calibration is valid")
}

fn kappa_of(model: &KimOmbergModel) -> Result<f64> {
    model.kappa().ok_or_else(|| Error::Domain("model is not in the nu1 = -kappa rho parameterization".into()))
}

/// Verdict of the `κ` condition at relative risk aversion `1 - p`.
pub fn kappa_condition(model: &KimOmbergModel, p: f64) -> Result<VerdictStatus> {
    let prefs = Preferences::new(p)?;
    Ok(optimality::check_ou_kappa(kappa_of(model)?, prefs.q * model.rho_sq())?.status)
}

/// Smallest `p < 0` for which the `κ` condition holds, from
/// `qρ'ρ < (2/κ + 1)/4`. `None` when it holds for every `p < 0`.
pub fn kappa_threshold_exact(model: &KimOmbergModel) -> Result<Option<f64>> {
    let kappa = kappa_of(model)?;
    let q_max = (2.0 / kappa + 1.0) / 4.0 / model.rho_sq();
    if q_max >= 1.0 {
        return Ok(None);
    }
    Ok(Some(q_max / (q_max - 1.0)))
}

/// Bisection in `p` on `[lo, hi]` for the switch of the `κ` condition.
/// The condition must hold at `hi` and fail at `lo`.
pub fn kappa_threshold_bisect(model: &KimOmbergModel, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let holds = |p: f64| -> Result<bool> { Ok(kappa_condition(model, p)? == VerdictStatus::SufficientConditionHolds) };
    if !(lo < hi && hi < 0.0) {
        return Err(Error::Domain(format!("bracket [{lo}, {hi}] must lie in p < 0")));
    }
    if holds(lo)? || !holds(hi)? {
        return Err(Error::NoBracket { lo, hi });
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let m = 0.5 * (a + b);
        if holds(m)? {
            b = m;
        } else {
            a = m;
        }
    }
    Ok(0.5 * (a + b))
}
