//! Thin wrappers over nalgebra's Cholesky factorization.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Factor a symmetric positive definite matrix. Only the lower triangle is read.
pub(crate) fn factor_spd(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!("{what} (non-finite entries)")));
    }
    Cholesky::new(m).ok_or_else(|| Error::Degenerate(what.to_string()))
}

/// `v^T A^{-1} v` through the Cholesky factor `A = L L^T`, i.e. `|L^{-1} v|^2`.
pub(crate) fn inverse_quadratic_form(chol: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> f64 {
    let w = chol
        .l_dirty()
        .solve_lower_triangular(v)
        .expect("Cholesky factor has a positive diagonal");
    w.norm_squared()
}
