//! Dense helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// `Xᵀ diag(w) X` for nonnegative weights.
pub fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut scaled = x.clone();
    for (i, &wi) in w.iter().enumerate() {
        let s = wi.max(0.0).sqrt();
        scaled.row_mut(i).scale_mut(s);
    }
    scaled.tr_mul(&scaled)
}

/// Same as [`weighted_gram`] restricted to a subset of columns.
pub fn weighted_gram_cols(x: &DMatrix<f64>, w: &[f64], cols: &[usize]) -> DMatrix<f64> {
    let sub = x.select_columns(cols);
    weighted_gram(&sub, w)
}

pub fn cholesky(m: DMatrix<f64>, what: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or(Error::NotPositiveDefinite(what))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, 0)
        .ok_or(Error::NotPositiveDefinite("eigen-solve failed to converge"))?;
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Largest eigenvalue of `XᵀX` by power iteration; a Lipschitz estimate,
/// slightly inflated so it upper-bounds the true value.
pub fn gram_spectral_norm(x: &DMatrix<f64>, iters: usize) -> f64 {
    let p = x.ncols();
    if p == 0 || x.nrows() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..iters {
        let xv = x * &v;
        let w = x.tr_mul(&xv);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        est = norm;
        v = w / norm;
    }
    est * 1.05
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_and_eigen() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let g = weighted_gram(&x, &[1.0, 1.0, 0.0]);
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]));
        assert!((min_eigenvalue(&g).unwrap() - 1.0).abs() < 1e-12);
        let full = weighted_gram(&x, &[1.0; 3]);
        assert!((full - x.tr_mul(&x)).norm() < 1e-14);
        let s = gram_spectral_norm(&x, 100);
        assert!(s >= 5.0 * 1.0);
    }
}
