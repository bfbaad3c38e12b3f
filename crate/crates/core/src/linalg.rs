//! Small dense linear-algebra helpers shared by the numeric modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Matrix<T> = DMatrix<T>;
pub type Vector<T> = DVector<T>;

/// Largest eigenvalue modulus.
pub fn spectral_radius<T: Real>(m: &Matrix<T>) -> T {
    m.complex_eigenvalues()
        .iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .fold(T::zero(), |acc, v| if v > acc { v } else { acc })
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &Matrix<T>) -> T {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(T::zero(), |acc, v| if v > acc { v } else { acc })
}

pub fn mat_pow<T: Real>(m: &Matrix<T>, k: usize) -> Matrix<T> {
    let mut out = Matrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = m * &out;
    }
    out
}

pub fn max_abs<T: Real>(m: &Matrix<T>) -> T {
    m.iter()
        .map(|v| v.abs())
        .fold(T::zero(), |acc, v| if v > acc { v } else { acc })
}

pub fn is_symmetric<T: Real>(m: &Matrix<T>, tol: T) -> bool {
    m.is_square() && max_abs(&(m - m.transpose())) <= tol
}

fn symmetry_tol<T: Real>(m: &Matrix<T>) -> T {
    T::lit(1e3) * T::machine_eps() * (T::one() + max_abs(m))
}

/// Returns `L` with `L·Lᵀ = sigma` for a symmetric positive-semidefinite `sigma`.
///
/// Uses the eigendecomposition so singular (and zero) covariances are accepted.
pub fn psd_factor<T: Real>(sigma: &Matrix<T>) -> Result<Matrix<T>> {
    if !sigma.is_square() {
        return Err(Error::dimension(
            "covariance",
            "square matrix",
            format!("{}x{}", sigma.nrows(), sigma.ncols()),
        ));
    }
    let tol = symmetry_tol(sigma);
    if !is_symmetric(sigma, tol) {
        return Err(Error::Config("covariance is not symmetric".into()));
    }
    let eig = sigma.clone().symmetric_eigen();
    let mut sqrt_vals = eig.eigenvalues.clone();
    for v in sqrt_vals.iter_mut() {
        if *v < -tol {
            return Err(Error::Config(format!(
                "covariance is not positive semidefinite (eigenvalue {v})"
            )));
        }
        *v = if *v > T::zero() { v.sqrt() } else { T::zero() };
    }
    Ok(&eig.eigenvectors * Matrix::from_diagonal(&sqrt_vals))
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_factor<T: Real>(m: &Matrix<T>) -> Result<Matrix<T>> {
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Config("matrix is not positive definite".into()))
}

/// Inverse of a symmetric positive-definite matrix, symmetrised.
pub fn spd_inverse<T: Real>(m: &Matrix<T>) -> Result<Matrix<T>> {
    let inv = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Config("matrix is not positive definite".into()))?
        .inverse();
    Ok((&inv + inv.transpose()) * T::lit(0.5))
}

pub fn check_shape<T: Real>(context: &'static str, m: &Matrix<T>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::dimension(
            context,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub fn check_len<T: Real>(context: &'static str, v: &Vector<T>, len: usize) -> Result<()> {
    if v.len() != len {
        return Err(Error::dimension(context, len, v.len()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_factor_reconstructs() {
        let s = Matrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let l = psd_factor(&s).unwrap();
        let r = &l * l.transpose();
        assert!(max_abs(&(r - s)) < 1e-12);
    }

    #[test]
    fn psd_factor_accepts_zero_and_rejects_indefinite() {
        let z = Matrix::<f64>::zeros(3, 3);
        assert_eq!(max_abs(&psd_factor(&z).unwrap()), 0.0);
        let bad = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(psd_factor(&bad).is_err());
    }

    #[test]
    fn spectral_quantities() {
        let rot = Matrix::from_row_slice(2, 2, &[0.0, -2.0, 0.5, 0.0]);
        // eigenvalues ±i, singular values 2 and 0.5
        assert!((spectral_radius(&rot) - 1.0f64).abs() < 1e-12);
        assert!((spectral_norm(&rot) - 2.0f64).abs() < 1e-12);
    }
}
