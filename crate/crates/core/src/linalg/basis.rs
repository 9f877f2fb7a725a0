//! Orthonormal basis of the null space of `1^T`, used to restrict quadratic
//! forms to the affine hull of the unit simplex.

use super::DenseMatrix;
use crate::error::Error;
use crate::Result;

/// Semi-orthogonal `Psi` of shape `N x (N-1)` with `Psi^T Psi = I` and
/// `Psi^T 1 = 0`.
#[derive(Debug, Clone)]
pub struct SimplexNullBasis {
    pub dimension: usize,
    pub psi: DenseMatrix,
}

/// Builds the basis from a Householder reflector whose first column is
/// `1/sqrt(N)`; the remaining columns span the orthogonal complement of `1`.
pub fn simplex_null_basis(n: usize) -> Result<SimplexNullBasis> {
    if n < 2 {
        return Err(Error::invalid("simplex null basis needs N >= 2"));
    }
    // H = I - 2 w w^T / ||w||^2 with w = e - e_1, e = 1/sqrt(N) * ones.
    // H is symmetric orthogonal with H e_1 = e, so columns 2..N are an
    // orthonormal basis of span{1}^perp.
    let e = 1.0 / (n as f64).sqrt();
    let mut w = vec![e; n];
    w[0] -= 1.0;
    let wnorm_sq: f64 = w.iter().map(|x| x * x).sum();
    let psi = DenseMatrix::from_fn(n, n - 1, |r, c| {
        let j = c + 1;
        let delta = if r == j { 1.0 } else { 0.0 };
        delta - 2.0 * w[r] * w[j] / wnorm_sq
    });
    Ok(SimplexNullBasis { dimension: n, psi })
}
