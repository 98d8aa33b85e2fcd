//! Small dense linear-algebra helpers built on `nalgebra`.
//!
//! Everything here works on `DMatrix<f64>`; dimensions in this crate are
//! tiny (n, k below ~50) so Kronecker-product formulations are acceptable.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Cholesky on the symmetric part. Succeeds iff the matrix is (numerically)
/// positive definite.
pub fn is_positive_definite(m: &Mat) -> bool {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return false;
    }
    if m.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let s = symmetrize(m);
    match s.clone().cholesky() {
        Some(_) => {
            // Cholesky succeeds on tiny positive pivots; require a pivot floor
            // relative to the matrix scale.
            let eig = s.symmetric_eigenvalues();
            let max = eig.iter().cloned().fold(0.0_f64, |a, b| a.max(b.abs()));
            eig.iter().all(|&e| e > 1e-14 * max.max(f64::MIN_POSITIVE))
        }
        None => false,
    }
}

/// Unique symmetric positive-definite square root.
pub fn spd_sqrt(m: &Mat) -> Result<Mat> {
    let eig = symmetrize(m).symmetric_eigen();
    if eig.eigenvalues.iter().any(|&e| e < 0.0) {
        return Err(Error::Domain("matrix square root of a non-PSD matrix".into()));
    }
    let d = Mat::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_sym_eigenvalue(m: &Mat) -> f64 {
    symmetrize(m).symmetric_eigenvalues().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

pub fn condition_number(m: &Mat) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn inverse(m: &Mat) -> Result<Mat> {
    let cond = condition_number(m);
    if !cond.is_finite() || cond > 1e14 {
        return Err(Error::SingularSystem { condition: cond });
    }
    m.clone().try_inverse().ok_or(Error::SingularSystem { condition: cond })
}

/// Solves `m x = rhs` with an LU factorization, rejecting condition numbers
/// above 1e14.
pub fn solve(m: &Mat, rhs: &Vector) -> Result<Vector> {
    let cond = condition_number(m);
    if !cond.is_finite() || cond > 1e14 {
        return Err(Error::SingularSystem { condition: cond });
    }
    m.clone().lu().solve(rhs).ok_or(Error::SingularSystem { condition: cond })
}

pub fn eigenvalues(m: &Mat) -> Vec<Complex<f64>> {
    m.complex_eigenvalues().iter().cloned().collect()
}

/// Solves the continuous Lyapunov equation `d' x + x d = rhs` through the
/// Kronecker form `(I ⊗ d' + d' ⊗ I) vec(x) = vec(rhs)`.
pub fn lyapunov(d: &Mat, rhs: &Mat) -> Result<Mat> {
    let k = d.nrows();
    let dt = d.transpose();
    let eye = Mat::identity(k, k);
    let big = eye.kronecker(&dt) + dt.kronecker(&eye);
    let vec_rhs = Vector::from_column_slice(rhs.as_slice());
    let x = big.lu().solve(&vec_rhs).ok_or(Error::SingularSystem { condition: f64::INFINITY })?;
    Ok(Mat::from_column_slice(k, k, x.as_slice()))
}

/// Matrix sign function by the scaled Newton iteration
/// `S <- (c S + (c S)^-1) / 2` with determinant scaling.
pub fn matrix_sign(h: &Mat, tol: f64, max_iter: usize) -> Result<Mat> {
    let n = h.nrows();
    let mut s = h.clone();
    for _ in 0..max_iter {
        let inv = s.clone().try_inverse().ok_or(Error::NoStabilizingSolution("Hamiltonian has imaginary-axis eigenvalues".into()))?;
        let det = s.determinant().abs();
        let c = if det > 0.0 && det.is_finite() { det.powf(-1.0 / n as f64) } else { 1.0 };
        let next = (&s * c + inv / c) * 0.5;
        let change = (&next - &s).norm() / next.norm().max(1.0);
        s = next;
        if change < tol {
            return Ok(s);
        }
    }
    Err(Error::NoStabilizingSolution("matrix sign iteration did not converge".into()))
}

/// Least-squares solve of `m x = rhs` (tall `m`) via SVD.
pub fn least_squares(m: &Mat, rhs: &Mat) -> Result<Mat> {
    let svd = m.clone().svd(true, true);
    svd.solve(rhs, 1e-14).map_err(|e| Error::NoStabilizingSolution(e.to_string()))
}

pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}
