//! Recovery-quality metrics (SAM, per-band PSNR, ERGAS) and the bicubic
//! naive-interpolation baseline.

use crate::error::Error;
use crate::linalg::DenseMatrix;
use crate::Result;

/// Per-pixel spectral angles and their mean.
#[derive(Debug, Clone)]
pub struct SamResult {
    /// Angle per pixel, radians in `[0, pi]`.
    pub map: Vec<f64>,
    pub mean_rad: f64,
    /// Pixels where either spectrum was zero; their angle is reported as 0.
    pub degenerate_pixels: usize,
}

impl SamResult {
    pub fn mean_deg(&self) -> f64 {
        self.mean_rad.to_degrees()
    }
}

/// Spectral angle mapper `arccos(<x_i, xh_i> / (||x_i|| ||xh_i||))` per pixel.
pub fn sam(x: &DenseMatrix, x_hat: &DenseMatrix) -> Result<SamResult> {
    if x.shape() != x_hat.shape() {
        return Err(Error::invalid("SAM needs matching shapes"));
    }
    let (m, l) = x.shape();
    let mut map = Vec::with_capacity(l);
    let mut degenerate = 0;
    for c in 0..l {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for r in 0..m {
            let a = x.get(r, c);
            let b = x_hat.get(r, c);
            dot += a * b;
            na += a * a;
            nb += b * b;
        }
        if na == 0.0 || nb == 0.0 {
            degenerate += 1;
            map.push(0.0);
        } else {
            let cos = (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0);
            map.push(cos.acos());
        }
    }
    let mean_rad = map.iter().sum::<f64>() / l as f64;
    Ok(SamResult {
        map,
        mean_rad,
        degenerate_pixels: degenerate,
    })
}

/// Per-band PSNR in dB: `10 log10(peak_i^2 / MSE_i)` with `peak_i` the
/// ground-truth band maximum; exact bands report `+inf`.
pub fn psnr_per_band(x: &DenseMatrix, x_hat: &DenseMatrix) -> Result<Vec<f64>> {
    if x.shape() != x_hat.shape() {
        return Err(Error::invalid("PSNR needs matching shapes"));
    }
    let (m, l) = x.shape();
    let mut out = Vec::with_capacity(m);
    for r in 0..m {
        let band = x.row(r);
        let est = x_hat.row(r);
        let peak = band.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mse: f64 = band
            .iter()
            .zip(est)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / l as f64;
        if mse == 0.0 {
            out.push(f64::INFINITY);
        } else {
            out.push(10.0 * (peak * peak / mse).log10());
        }
    }
    Ok(out)
}

/// ERGAS with the scale factor `S = sqrt(M_M / M)`:
/// `100/S * sqrt((1/M) sum_i MSE(band_i) / mean(est band_i)^2)`.
///
/// Bands whose estimated mean is zero are skipped and reported.
pub fn ergas_detailed(
    x: &DenseMatrix,
    x_hat: &DenseMatrix,
    m_m: usize,
    m: usize,
) -> Result<(f64, Vec<usize>)> {
    if x.shape() != x_hat.shape() {
        return Err(Error::invalid("ERGAS needs matching shapes"));
    }
    if x.rows() != m {
        return Err(Error::invalid("band count must equal M"));
    }
    let l = x.cols();
    let s = (m_m as f64 / m as f64).sqrt();
    let mut acc = 0.0;
    let mut used = 0usize;
    let mut skipped = Vec::new();
    for r in 0..m {
        let mean: f64 = x_hat.row(r).iter().sum::<f64>() / l as f64;
        if mean == 0.0 {
            skipped.push(r);
            continue;
        }
        let mse: f64 = x
            .row(r)
            .iter()
            .zip(x_hat.row(r))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / l as f64;
        acc += mse / (mean * mean);
        used += 1;
    }
    if used == 0 {
        return Err(Error::invalid("every estimated band has zero mean"));
    }
    Ok(((100.0 / s) * (acc / used as f64).sqrt(), skipped))
}

pub fn ergas(x: &DenseMatrix, x_hat: &DenseMatrix, m_m: usize, m: usize) -> Result<f64> {
    ergas_detailed(x, x_hat, m_m, m).map(|(v, _)| v)
}

/// Evaluation bundle over the three metrics.
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub mean_sam_rad: f64,
    pub mean_sam_deg: f64,
    pub psnr_per_band: Vec<f64>,
    pub ergas: f64,
    pub sam_map: Vec<f64>,
}

pub fn evaluate(x: &DenseMatrix, x_hat: &DenseMatrix, m_m: usize) -> Result<EvaluationReport> {
    let sam_res = sam(x, x_hat)?;
    let psnr = psnr_per_band(x, x_hat)?;
    let erg = ergas(x, x_hat, m_m, x.rows())?;
    Ok(EvaluationReport {
        mean_sam_rad: sam_res.mean_rad,
        mean_sam_deg: sam_res.mean_deg(),
        psnr_per_band: psnr,
        ergas: erg,
        sam_map: sam_res.map,
    })
}

// Catmull-Rom weights for interpolation offset t in [0, 1).
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

/// 1-D Catmull-Rom upsampling by `factor` with edge clamping; coarse sample
/// `c` sits at fine position `c * factor + (factor - 1) / 2`, matching the
/// decimation sampling convention.
fn upsample_1d(src: &[f64], factor: usize, out: &mut [f64]) {
    let n = src.len();
    debug_assert_eq!(out.len(), n * factor);
    if factor == 1 {
        out.copy_from_slice(src);
        return;
    }
    let off = ((factor - 1) / 2) as f64;
    let clamp = |i: isize| -> f64 { src[i.clamp(0, n as isize - 1) as usize] };
    for (j, o) in out.iter_mut().enumerate() {
        let s = (j as f64 - off) / factor as f64;
        let j0 = s.floor();
        let t = s - j0;
        let j0 = j0 as isize;
        let w = catmull_rom(t);
        *o = w[0] * clamp(j0 - 1) + w[1] * clamp(j0) + w[2] * clamp(j0 + 1) + w[3] * clamp(j0 + 2);
    }
}

/// Per-band separable bicubic upsampling of the coarse image `Y_H` (bands by
/// coarse pixels, column-major spatial linearization) back to `L_x x L_y`.
pub fn naive_interpolation(
    y_h: &DenseMatrix,
    l_x: usize,
    l_y: usize,
    factor: usize,
) -> Result<DenseMatrix> {
    if factor == 0 || !l_x.is_multiple_of(factor) || !l_y.is_multiple_of(factor) {
        return Err(Error::invalid("image dims must be divisible by the factor"));
    }
    let cx = l_x / factor;
    let cy = l_y / factor;
    if y_h.cols() != cx * cy {
        return Err(Error::invalid(format!(
            "Y_H has {} pixels, expected {}",
            y_h.cols(),
            cx * cy
        )));
    }
    let m = y_h.rows();
    let mut out = DenseMatrix::zeros(m, l_x * l_y);
    let mut col_in = vec![0.0; cy];
    let mut col_up = vec![0.0; l_y];
    let mut row_in = vec![0.0; cx];
    let mut row_up = vec![0.0; l_x];
    // Intermediate: fine rows x coarse columns.
    let mut half = vec![0.0; l_y * cx];
    for band in 0..m {
        let src = y_h.row(band);
        for k in 0..cx {
            for j in 0..cy {
                col_in[j] = src[j + k * cy];
            }
            upsample_1d(&col_in, factor, &mut col_up);
            for j in 0..l_y {
                half[j + k * l_y] = col_up[j];
            }
        }
        let dst = out.row_mut(band);
        for j in 0..l_y {
            for k in 0..cx {
                row_in[k] = half[j + k * l_y];
            }
            upsample_1d(&row_in, factor, &mut row_up);
            for k in 0..l_x {
                dst[j + k * l_y] = row_up[k];
            }
        }
    }
    Ok(out)
}
