//! Spectral and spatial decimation operators.
//!
//! The spatial operator realizes `X G` column-by-column through small pixel
//! neighborhoods and blur weights; it is never materialized densely on the
//! solve path. Pixel `(j, k)` of an `L_y x L_x` grid linearizes to index
//! `j + k * L_y` (column-major in the spatial grid).

use super::DenseMatrix;
use crate::error::Error;
use crate::Result;

/// Sparse column-structured operator `G in R^{L x L_H}`: output column `i`
/// of `X G` is `X[:, nbrs_i] * w_i`.
#[derive(Debug, Clone)]
pub struct SpatialDecimationOperator {
    input_len: usize,
    output_len: usize,
    l_x: usize,
    l_y: usize,
    factor: usize,
    kernel_width: usize,
    /// CSR-style layout: column `i` owns `indices[offsets[i]..offsets[i+1]]`.
    offsets: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl SpatialDecimationOperator {
    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn output_len(&self) -> usize {
        self.output_len
    }

    pub fn image_dims(&self) -> (usize, usize) {
        (self.l_x, self.l_y)
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn kernel_width(&self) -> usize {
        self.kernel_width
    }

    /// Neighborhood and weights of output column `i`.
    pub fn column(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
        (&self.indices[lo..hi], &self.weights[lo..hi])
    }

    /// Total neighborhood size, `sum_i |L_i|`.
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Rebuild from persisted neighborhoods + weights.
    pub fn from_columns(
        l_x: usize,
        l_y: usize,
        factor: usize,
        kernel_width: usize,
        columns: &[(Vec<usize>, Vec<f64>)],
    ) -> Result<Self> {
        let input_len = l_x * l_y;
        let output_len = columns.len();
        let mut offsets = Vec::with_capacity(output_len + 1);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for (nbrs, w) in columns {
            if nbrs.len() != w.len() {
                return Err(Error::invalid("neighborhood/weight length mismatch"));
            }
            if nbrs.iter().any(|&j| j >= input_len) {
                return Err(Error::invalid("neighbor index out of range"));
            }
            indices.extend_from_slice(nbrs);
            weights.extend_from_slice(w);
            offsets.push(indices.len());
        }
        Ok(SpatialDecimationOperator {
            input_len,
            output_len,
            l_x,
            l_y,
            factor,
            kernel_width,
            offsets,
            indices,
            weights,
        })
    }

    /// `X G`, with `X` of shape `M x L`.
    pub fn apply(&self, x: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            x.cols(),
            self.input_len,
            "column count must match operator input"
        );
        let m = x.rows();
        let mut out = DenseMatrix::zeros(m, self.output_len);
        for r in 0..m {
            let xr = x.row(r);
            let or = out.row_mut(r);
            for i in 0..self.output_len {
                let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
                let mut acc = 0.0;
                for t in lo..hi {
                    acc += self.weights[t] * xr[self.indices[t]];
                }
                or[i] = acc;
            }
        }
        out
    }

    /// `Y G^T`, the exact adjoint of [`SpatialDecimationOperator::apply`].
    pub fn apply_adjoint(&self, y: &DenseMatrix) -> DenseMatrix {
        assert_eq!(
            y.cols(),
            self.output_len,
            "column count must match operator output"
        );
        let m = y.rows();
        let mut out = DenseMatrix::zeros(m, self.input_len);
        for r in 0..m {
            let yr = y.row(r);
            let or = out.row_mut(r);
            for i in 0..self.output_len {
                let v = yr[i];
                if v == 0.0 {
                    continue;
                }
                let (lo, hi) = (self.offsets[i], self.offsets[i + 1]);
                for t in lo..hi {
                    or[self.indices[t]] += self.weights[t] * v;
                }
            }
        }
        out
    }

    /// Materialized dense `G` (`L x L_H`); test oracle only.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut g = DenseMatrix::zeros(self.input_len, self.output_len);
        for i in 0..self.output_len {
            let (nbrs, w) = self.column(i);
            for (&j, &wj) in nbrs.iter().zip(w) {
                g.set(j, i, wj);
            }
        }
        g
    }
}

/// Builds the blur-then-decimate operator: a truncated 2-D Gaussian of width
/// `kernel_width` and scale `sigma`, renormalized at image edges, sampled at
/// stride `factor`.
pub fn build_spatial_operator(
    l_x: usize,
    l_y: usize,
    kernel_width: usize,
    sigma: f64,
    factor: usize,
) -> Result<SpatialDecimationOperator> {
    if l_x == 0 || l_y == 0 || factor == 0 {
        return Err(Error::invalid("image dims and factor must be positive"));
    }
    if !l_x.is_multiple_of(factor) || !l_y.is_multiple_of(factor) {
        return Err(Error::invalid(format!(
            "image dims {l_x}x{l_y} not divisible by factor {factor}"
        )));
    }
    if kernel_width.is_multiple_of(2) {
        return Err(Error::invalid("kernel width must be odd"));
    }
    if sigma <= 0.0 {
        return Err(Error::invalid("sigma must be positive"));
    }
    let out_x = l_x / factor;
    let out_y = l_y / factor;
    let output_len = out_x * out_y;
    let hw = (kernel_width - 1) / 2;
    // Sample point of output pixel (jo, ko) in the fine grid.
    let off = (factor - 1) / 2;
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);

    let mut offsets = Vec::with_capacity(output_len + 1);
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    offsets.push(0);
    for ko in 0..out_x {
        for jo in 0..out_y {
            let cj = jo * factor + off;
            let ck = ko * factor + off;
            let j_lo = cj.saturating_sub(hw);
            let j_hi = (cj + hw).min(l_y - 1);
            let k_lo = ck.saturating_sub(hw);
            let k_hi = (ck + hw).min(l_x - 1);
            let mut sum = 0.0;
            let start = indices.len();
            for k in k_lo..=k_hi {
                for j in j_lo..=j_hi {
                    let dj = j as f64 - cj as f64;
                    let dk = k as f64 - ck as f64;
                    let w = (-(dj * dj + dk * dk) * inv_two_sigma_sq).exp();
                    indices.push(j + k * l_y);
                    weights.push(w);
                    sum += w;
                }
            }
            for w in &mut weights[start..] {
                *w /= sum;
            }
            offsets.push(indices.len());
        }
    }
    // Output columns follow the pixel linearization: jo + ko * out_y.
    Ok(SpatialDecimationOperator {
        input_len: l_x * l_y,
        output_len,
        l_x,
        l_y,
        factor,
        kernel_width,
        offsets,
        indices,
        weights,
    })
}

/// Spectral decimation by uniform band averaging: rows partition the `M`
/// fine bands into `M_M` contiguous groups whose sizes differ by at most one.
pub fn build_band_average_f(m_bands: usize, m_m: usize) -> Result<DenseMatrix> {
    if m_m == 0 || m_bands == 0 {
        return Err(Error::invalid("band counts must be positive"));
    }
    if m_m > m_bands {
        return Err(Error::invalid(format!(
            "output bands {m_m} exceed input bands {m_bands}"
        )));
    }
    let base = m_bands / m_m;
    let extra = m_bands % m_m;
    let mut f = DenseMatrix::zeros(m_m, m_bands);
    let mut start = 0;
    for r in 0..m_m {
        let size = base + if r < extra { 1 } else { 0 };
        let w = 1.0 / size as f64;
        for c in start..start + size {
            f.set(r, c, w);
        }
        start += size;
    }
    Ok(f)
}
