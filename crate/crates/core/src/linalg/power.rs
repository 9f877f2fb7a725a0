//! Power-method eigensolvers: largest eigenvalue of a symmetric PSD map and
//! the principal singular pair with warm start.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::{vec_dot, vec_norm};
use super::DenseMatrix;

/// A symmetric positive-semidefinite linear map on `R^d`, applied without
/// materializing the matrix.
pub trait SymmetricOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

/// Dense symmetric matrix viewed as an operator.
pub struct DenseSymOp<'a>(pub &'a DenseMatrix);

impl SymmetricOp for DenseSymOp<'_> {
    fn dim(&self) -> usize {
        self.0.rows()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0.matvec(x));
    }
}

/// Operator built from a closure, for structured maps like `G^T G`.
pub struct FnSymOp<F: Fn(&[f64], &mut [f64])> {
    pub dim: usize,
    pub apply: F,
}

impl<F: Fn(&[f64], &mut [f64])> SymmetricOp for FnSymOp<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        (self.apply)(x, out)
    }
}

/// Result of a power-method run. `value` is always a Rayleigh quotient, so it
/// never exceeds the true largest eigenvalue; when `converged` is false the
/// caller may still accept it as a lower bound.
#[derive(Debug, Clone)]
pub struct PowerOutcome {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest eigenvalue of a symmetric PSD operator by power iteration.
///
/// Deterministic for a fixed `seed`. The iteration stops once the Rayleigh
/// quotient changes by at most `tol` relative between sweeps.
pub fn power_iteration_lambda_max(
    op: &dyn SymmetricOp,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> PowerOutcome {
    let d = op.dim();
    assert!(d >= 1, "operator dimension must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = vec_norm(&v);
    for x in v.iter_mut() {
        *x /= norm;
    }
    let mut w = vec![0.0; d];
    let mut lambda = 0.0;
    for it in 0..max_iter {
        op.apply(&v, &mut w);
        let new_lambda = vec_dot(&v, &w);
        let wn = vec_norm(&w);
        if wn == 0.0 {
            // v is in the null space; for a PSD map started from a random
            // vector this only happens when the operator is (numerically) zero.
            return PowerOutcome {
                value: 0.0,
                converged: true,
                iterations: it + 1,
            };
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        if (new_lambda - lambda).abs() <= tol * new_lambda.abs().max(f64::MIN_POSITIVE) {
            return PowerOutcome {
                value: new_lambda,
                converged: true,
                iterations: it + 1,
            };
        }
        lambda = new_lambda;
    }
    PowerOutcome {
        value: lambda,
        converged: false,
        iterations: max_iter,
    }
}

/// Principal singular triplet of a matrix.
#[derive(Debug, Clone)]
pub struct SingularPair {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub converged: bool,
    /// Set when the input was (numerically) zero and the vectors are arbitrary.
    pub degenerate: bool,
    pub iterations: usize,
}

/// Principal singular pair by alternating power iteration on `M^T M`.
///
/// `warm` supplies a starting right singular vector, typically the pair from
/// the previous outer iterate. Convergence is declared when the singular
/// residual `||M^T u - sigma v||` drops below `tol * sigma`.
pub fn principal_singular_pair(
    m: &DenseMatrix,
    warm: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> SingularPair {
    let (rows, cols) = m.shape();
    let mut v: Vec<f64> = match warm {
        Some(w) if w.len() == cols && vec_norm(w) > 0.0 => w.to_vec(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            (0..cols).map(|_| rng.random::<f64>() - 0.5).collect()
        }
    };
    let nv = vec_norm(&v);
    if m.max_abs() == 0.0 {
        let mut u = vec![0.0; rows];
        u[0] = 1.0;
        let mut vv = vec![0.0; cols];
        vv[0] = 1.0;
        return SingularPair {
            sigma: 0.0,
            u,
            v: vv,
            converged: true,
            degenerate: true,
            iterations: 0,
        };
    }
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut u = vec![0.0; rows];
    let mut sigma = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let mv = m.matvec(&v);
        sigma = vec_norm(&mv);
        if sigma == 0.0 {
            // v landed exactly in the null space; restart deterministically.
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ it as u64);
            for x in v.iter_mut() {
                *x = rng.random::<f64>() - 0.5;
            }
            let n = vec_norm(&v);
            for x in v.iter_mut() {
                *x /= n;
            }
            continue;
        }
        for (ui, mi) in u.iter_mut().zip(&mv) {
            *ui = mi / sigma;
        }
        let mtu = m.matvec_t(&u);
        let resid: f64 = mtu
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - sigma * b) * (a - sigma * b))
            .sum::<f64>()
            .sqrt();
        let n = vec_norm(&mtu);
        for (vi, mi) in v.iter_mut().zip(&mtu) {
            *vi = mi / n;
        }
        if resid <= tol * sigma {
            converged = true;
            break;
        }
    }
    SingularPair {
        sigma,
        u,
        v,
        converged,
        degenerate: false,
        iterations,
    }
}
