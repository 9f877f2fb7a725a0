//! Dense symmetric eigensolver and SVD.
//!
//! Both are Jacobi-rotation methods: cyclic two-sided Jacobi for symmetric
//! eigenproblems and one-sided Hestenes sweeps for the SVD. The matrices on
//! these paths are small (step-size forms, per-row abundance maps), and
//! Jacobi handles exactly-degenerate inputs (constant maps, repeated
//! eigenvalues) that trip up bidiagonalization-based routines.

use super::DenseMatrix;
use crate::error::Error;
use crate::Result;

const JACOBI_SWEEPS: usize = 64;

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotation.
/// Returns eigenvalues (descending) and the matching orthonormal
/// eigenvectors as columns.
pub fn jacobi_symmetric_eigen(m: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = m.rows();
    assert_eq!(n, m.cols(), "symmetric eigen needs a square matrix");
    let mut a: Vec<f64> = m.as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = m.max_abs().max(f64::MIN_POSITIVE);
    let tol = f64::EPSILON * scale;

    for _ in 0..JACOBI_SWEEPS {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(a[p * n + q].abs());
            }
        }
        if off <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol * 1e-3 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A <- J^T A J on rows/cols p, q.
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v[r * n + order[c]]);
    (values, vectors)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn lambda_max_dense(m: &DenseMatrix) -> f64 {
    jacobi_symmetric_eigen(m).0[0]
}

/// All eigenvalues of a symmetric matrix, descending.
pub fn sym_eigenvalues(m: &DenseMatrix) -> Vec<f64> {
    jacobi_symmetric_eigen(m).0
}

/// Principal eigenpair (value, unit vector) of a symmetric matrix.
pub fn principal_eigenpair_dense(m: &DenseMatrix) -> (f64, Vec<f64>) {
    let (values, vectors) = jacobi_symmetric_eigen(m);
    (values[0], vectors.col(0))
}

/// Thin SVD `M = U diag(s) V^T` with `U: m x k`, `V_t: k x n`, `k = min(m, n)`,
/// singular values descending.
pub struct ThinSvd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v_t: DenseMatrix,
}

/// One-sided Jacobi (Hestenes) SVD.
pub fn thin_svd(m: &DenseMatrix) -> Result<ThinSvd> {
    let (rows, cols) = m.shape();
    if rows <= cols {
        // Work on M^T: its columns are few; M^T = P Sigma Q^T gives
        // M = Q Sigma P^T.
        let (p, sigma, q) = hestenes(&m.transpose())?;
        Ok(ThinSvd {
            u: q,
            singular_values: sigma,
            v_t: p.transpose(),
        })
    } else {
        let (u, sigma, v) = hestenes(m)?;
        Ok(ThinSvd {
            u,
            singular_values: sigma,
            v_t: v.transpose(),
        })
    }
}

/// Hestenes sweeps on `w` (`d x k`, `d >= k`): returns `(U, sigma, V)` with
/// `w = U diag(sigma) V^T`, `U: d x k`, `V: k x k`.
fn hestenes(w: &DenseMatrix) -> Result<(DenseMatrix, Vec<f64>, DenseMatrix)> {
    let (d, k) = w.shape();
    // Column-major working copy for contiguous column access.
    let mut cols: Vec<Vec<f64>> = (0..k).map(|c| w.col(c)).collect();
    let mut v = vec![0.0; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    // Rounding keeps the cross terms of orthogonalized columns near
    // sqrt(d) * eps, so the stopping threshold must sit above that floor.
    let tol = 16.0 * f64::EPSILON * (d as f64).sqrt();
    // Columns this far below the matrix scale are numerically null; rank
    // deficiency otherwise leaves parallel eps-scale residues that would
    // rotate forever.
    let scale_sq: f64 = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>())
        .fold(0.0, f64::max);
    let zero_tol_sq = scale_sq * (f64::EPSILON * d as f64).powi(2);

    let mut converged = false;
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for i in 0..k.saturating_sub(1) {
            for j in i + 1..k {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for t in 0..d {
                    alpha += cols[i][t] * cols[i][t];
                    beta += cols[j][t] * cols[j][t];
                    gamma += cols[i][t] * cols[j][t];
                }
                if alpha <= zero_tol_sq {
                    cols[i].iter_mut().for_each(|x| *x = 0.0);
                    continue;
                }
                if beta <= zero_tol_sq {
                    cols[j].iter_mut().for_each(|x| *x = 0.0);
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() + f64::MIN_POSITIVE {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..d {
                    let wi = cols[i][r];
                    let wj = cols[j][r];
                    cols[i][r] = c * wi - s * wj;
                    cols[j][r] = s * wi + c * wj;
                }
                for r in 0..k {
                    let vi = v[r * k + i];
                    let vj = v[r * k + j];
                    v[r * k + i] = c * vi - s * vj;
                    v[r * k + j] = s * vi + c * vj;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        // Sweeps exhausted with rotations still pending; the factorization
        // may be inaccurate.
        return Err(Error::numerical("one-sided Jacobi SVD did not converge"));
    }

    let mut sigma: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());
    let sigma_sorted: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    sigma = sigma_sorted;

    let u = DenseMatrix::from_fn(d, k, |r, c| {
        let src = order[c];
        if sigma[c] > 0.0 {
            cols[src][r] / sigma[c]
        } else {
            // Null columns carry zero weight in any reconstruction.
            0.0
        }
    });
    let v = DenseMatrix::from_fn(k, k, |r, c| v[r * k + order[c]]);
    Ok((u, sigma, v))
}

/// Nuclear norm (sum of singular values).
pub fn nuclear_norm(m: &DenseMatrix) -> Result<f64> {
    Ok(thin_svd(m)?.singular_values.iter().sum())
}
