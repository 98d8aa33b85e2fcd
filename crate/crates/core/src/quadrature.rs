//! Adaptive Simpson quadrature and log-domain trapezoid sums.

use crate::error::{Error, Result};

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: usize) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let diff = left + right - whole;
    if !diff.is_finite() {
        return Err(Error::QuadratureFailure(format!("non-finite integrand on [{a}, {b}]")));
    }
    if diff.abs() <= 15.0 * tol {
        return Ok(left + right + diff / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureFailure(format!("maximum depth reached on [{a}, {b}]")));
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)? + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// `∫_a^b f` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fa = f(lo);
    let fb = f(hi);
    let fm = f(0.5 * (lo + hi));
    let whole = simpson(fa, fm, fb, lo, hi);
    Ok(sign * recurse(&f, lo, hi, fa, fm, fb, whole, tol, 50)?)
}

/// `log Σ_i w_i exp(l_i)` for trapezoid weights on a uniform grid of step
/// `h`, i.e. the log of `∫ exp(l(z)) dz`. Entries equal to `-∞` contribute
/// nothing.
pub fn log_trapezoid(log_values: &[f64], h: f64) -> f64 {
    let n = log_values.len();
    if n < 2 {
        return f64::NEG_INFINITY;
    }
    let max = log_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut sum = 0.0;
    for (i, &l) in log_values.iter().enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        sum += w * (l - max).exp();
    }
    max + (sum * h).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_and_gaussian() {
        let v = adaptive_simpson(|x| x * x * x - x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let g = adaptive_simpson(|x| (-x * x).exp(), -10.0, 10.0, 1e-12).unwrap();
        assert!((g - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn log_trapezoid_of_constant() {
        let l = vec![2.0_f64.ln(); 11];
        assert!((log_trapezoid(&l, 0.1) - 2.0_f64.ln()).abs() < 1e-14);
    }
}
