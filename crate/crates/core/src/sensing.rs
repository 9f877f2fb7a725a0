//! Synthetic sensing-data generation: ground truth with smooth spectra and
//! spatially correlated abundance maps, spectral/spatial decimation, and
//! SNR-controlled Gaussian noise (Wald-style degradation protocol).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Error;
use crate::linalg::{
    build_band_average_f, build_spatial_operator, DenseMatrix, SpatialDecimationOperator,
};
use crate::Result;

/// True factors and their product.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub a: DenseMatrix,
    pub s: DenseMatrix,
    pub x: DenseMatrix,
}

/// Scene dimensions bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneDims {
    pub m: usize,
    pub m_m: usize,
    pub n: usize,
    pub l_x: usize,
    pub l_y: usize,
    pub l_h: usize,
    pub factor: usize,
}

/// Observation bundle produced by the sensing simulator.
#[derive(Debug, Clone)]
pub struct ScenePair {
    pub y_m: DenseMatrix,
    pub y_h: DenseMatrix,
    pub f: DenseMatrix,
    pub g: SpatialDecimationOperator,
    pub snr_m_db: f64,
    pub snr_h_db: f64,
    pub seed: u64,
    pub dims: SceneDims,
    pub ground_truth: Option<GroundTruth>,
}

/// Generates smooth random spectra (columns of `A`, cumulative sums of
/// positive increments normalized into `[0,1]`) and softmax abundance maps
/// driven by moving-average-smoothed white noise.
pub fn generate_ground_truth(
    m: usize,
    n: usize,
    l_x: usize,
    l_y: usize,
    seed: u64,
    smoothness: usize,
) -> Result<GroundTruth> {
    let l = l_x * l_y;
    if n == 0 || m == 0 || l == 0 {
        return Err(Error::invalid("dimensions must be positive"));
    }
    if n >= m.min(l) {
        return Err(Error::invalid(format!(
            "need N < min(M, L); got N={n}, M={m}, L={l}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Spectra: increasing cumulative sums, each column rescaled to peak 1.
    let mut a = DenseMatrix::zeros(m, n);
    for c in 0..n {
        let mut acc = 0.0;
        let mut col = Vec::with_capacity(m);
        for _ in 0..m {
            acc += rng.random::<f64>();
            col.push(acc);
        }
        let peak = acc;
        for (r, v) in col.iter().enumerate() {
            a.set(r, c, v / peak);
        }
    }

    // Abundance fields: white noise, box-smoothed, z-scored, sharpened, then
    // softmax across materials per pixel.
    let window = smoothness.max(1);
    let contrast = 3.0;
    let mut fields = Vec::with_capacity(n);
    for _ in 0..n {
        let noise: Vec<f64> = (0..l).map(|_| rng.random::<f64>() - 0.5).collect();
        let smoothed = box_smooth_2d(&noise, l_x, l_y, window);
        fields.push(zscore(smoothed));
    }
    let mut s = DenseMatrix::zeros(n, l);
    for p in 0..l {
        let mut max = f64::NEG_INFINITY;
        for field in &fields {
            max = max.max(contrast * field[p]);
        }
        let mut sum = 0.0;
        let mut vals = Vec::with_capacity(n);
        for field in &fields {
            let e = (contrast * field[p] - max).exp();
            vals.push(e);
            sum += e;
        }
        for (i, v) in vals.iter().enumerate() {
            s.set(i, p, v / sum);
        }
    }
    let x = a.matmul(&s);
    Ok(GroundTruth { a, s, x })
}

/// Separable moving average over the column-major `l_y x l_x` grid, with
/// edge clamping. `window = 1` is the identity.
fn box_smooth_2d(field: &[f64], l_x: usize, l_y: usize, window: usize) -> Vec<f64> {
    if window <= 1 {
        return field.to_vec();
    }
    let half = (window / 2) as isize;
    let mut tmp = vec![0.0; field.len()];
    // Along y.
    for k in 0..l_x {
        for j in 0..l_y as isize {
            let mut acc = 0.0;
            let mut count = 0.0;
            for d in -half..=half {
                let jj = (j + d).clamp(0, l_y as isize - 1) as usize;
                acc += field[jj + k * l_y];
                count += 1.0;
            }
            tmp[j as usize + k * l_y] = acc / count;
        }
    }
    // Along x.
    let mut out = vec![0.0; field.len()];
    for j in 0..l_y {
        for k in 0..l_x as isize {
            let mut acc = 0.0;
            let mut count = 0.0;
            for d in -half..=half {
                let kk = (k + d).clamp(0, l_x as isize - 1) as usize;
                acc += tmp[j + kk * l_y];
                count += 1.0;
            }
            out[j + k as usize * l_y] = acc / count;
        }
    }
    out
}

fn zscore(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    for x in v.iter_mut() {
        *x = (*x - mean) / sd;
    }
    v
}

/// Applies the decimation model and adds i.i.d. mean-zero Gaussian noise at
/// the requested per-sensor SNR. An infinite SNR means noiseless.
pub fn synthesize_observations(
    gt: &GroundTruth,
    f: &DenseMatrix,
    g: &SpatialDecimationOperator,
    snr_m_db: f64,
    snr_h_db: f64,
    seed: u64,
) -> Result<ScenePair> {
    if f.cols() != gt.x.rows() {
        return Err(Error::invalid("F column count must match band count"));
    }
    if g.input_len() != gt.x.cols() {
        return Err(Error::invalid("G input length must match pixel count"));
    }
    let clean_m = f.matmul(&gt.x);
    let clean_h = g.apply(&gt.x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y_m = add_noise(&clean_m, snr_m_db, &mut rng);
    let y_h = add_noise(&clean_h, snr_h_db, &mut rng);
    let (l_x, l_y) = g.image_dims();
    let dims = SceneDims {
        m: gt.x.rows(),
        m_m: f.rows(),
        n: gt.a.cols(),
        l_x,
        l_y,
        l_h: g.output_len(),
        factor: g.factor(),
    };
    Ok(ScenePair {
        y_m,
        y_h,
        f: f.clone(),
        g: g.clone(),
        snr_m_db,
        snr_h_db,
        seed,
        dims,
        ground_truth: Some(gt.clone()),
    })
}

/// Noise variance solves `10 log10(||signal||_F^2 / (numel * sigma^2)) = snr`.
fn add_noise(signal: &DenseMatrix, snr_db: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    if snr_db.is_infinite() {
        return signal.clone();
    }
    let numel = (signal.rows() * signal.cols()) as f64;
    let sigma_sq = signal.frob_norm_sq() / (numel * 10f64.powf(snr_db / 10.0));
    let normal = Normal::new(0.0, sigma_sq.sqrt()).expect("valid sigma");
    signal.map(|v| v + normal.sample(rng))
}

/// Scene presets mirroring the two experiment families, plus fully custom
/// dimensions. Presets expose their spec for desk-scale overrides.
#[derive(Debug, Clone)]
pub enum ScenePreset {
    ChikuseiLike,
    CupriteLike,
    Custom(SceneSpec),
}

/// All the knobs of a synthetic scene.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub m: usize,
    pub m_m: usize,
    pub n: usize,
    pub l_x: usize,
    pub l_y: usize,
    pub factor: usize,
    pub kernel_width: usize,
    pub sigma: f64,
    pub snr_m_db: f64,
    pub snr_h_db: f64,
    pub smoothness: usize,
}

impl ScenePreset {
    /// Concrete spec of the preset; desk-scale spatial dims for the
    /// Chikusei-like preset, full published dims for the Cuprite-like one.
    pub fn spec(&self) -> SceneSpec {
        match self {
            ScenePreset::ChikuseiLike => SceneSpec {
                m: 128,
                m_m: 4,
                n: 20,
                l_x: 64,
                l_y: 64,
                factor: 8,
                kernel_width: 11,
                sigma: 1.7,
                snr_m_db: 20.0,
                snr_h_db: 20.0,
                smoothness: 5,
            },
            ScenePreset::CupriteLike => SceneSpec {
                m: 224,
                m_m: 6,
                n: 10,
                l_x: 120,
                l_y: 120,
                factor: 4,
                kernel_width: 11,
                sigma: 1.7,
                snr_m_db: 20.0,
                snr_h_db: 20.0,
                smoothness: 5,
            },
            ScenePreset::Custom(spec) => spec.clone(),
        }
    }
}

/// Wald-protocol composition: ground truth, band-averaging `F`, blur `G`,
/// then noisy observations.
pub fn wald_scene(preset: &ScenePreset, seed: u64) -> Result<ScenePair> {
    let spec = preset.spec();
    let gt = generate_ground_truth(spec.m, spec.n, spec.l_x, spec.l_y, seed, spec.smoothness)?;
    let f = build_band_average_f(spec.m, spec.m_m)?;
    let g = build_spatial_operator(
        spec.l_x,
        spec.l_y,
        spec.kernel_width,
        spec.sigma,
        spec.factor,
    )?;
    synthesize_observations(
        &gt,
        &f,
        &g,
        spec.snr_m_db,
        spec.snr_h_db,
        seed.wrapping_add(1),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_truth_is_feasible() {
        let gt = generate_ground_truth(12, 3, 8, 8, 5, 3).unwrap();
        for &v in gt.a.as_slice() {
            assert!((0.0..=1.0).contains(&v));
        }
        for c in 0..gt.s.cols() {
            let mut sum = 0.0;
            for r in 0..gt.s.rows() {
                let v = gt.s.get(r, c);
                assert!(v >= 0.0);
                sum += v;
            }
            assert!((sum - 1.0).abs() < 1e-12, "column {c} sums to {sum}");
        }
        assert!(gt.x.sub(&gt.a.matmul(&gt.s)).max_abs() < 1e-15);
    }

    #[test]
    fn smoothness_increases_spatial_correlation() {
        let rough = generate_ground_truth(6, 3, 16, 16, 9, 0).unwrap();
        let smooth = generate_ground_truth(6, 3, 16, 16, 9, 7).unwrap();
        // Lag-1 autocorrelation along y of the first abundance map.
        let autocorr = |s: &DenseMatrix| {
            let row = s.row(0);
            let mut num = 0.0;
            let mut den = 0.0;
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            for k in 0..16 {
                for j in 0..15 {
                    num += (row[j + k * 16] - mean) * (row[j + 1 + k * 16] - mean);
                }
                for j in 0..16 {
                    den += (row[j + k * 16] - mean) * (row[j + k * 16] - mean);
                }
            }
            num / den
        };
        assert!(autocorr(&smooth.s) > autocorr(&rough.s) + 0.2);
    }

    #[test]
    fn ground_truth_reproducible() {
        let a = generate_ground_truth(8, 3, 6, 6, 77, 2).unwrap();
        let b = generate_ground_truth(8, 3, 6, 6, 77, 2).unwrap();
        assert_eq!(a.a, b.a);
        assert_eq!(a.s, b.s);
    }

    #[test]
    fn infinite_snr_is_noiseless() {
        let gt = generate_ground_truth(8, 3, 8, 8, 2, 2).unwrap();
        let f = build_band_average_f(8, 3).unwrap();
        let g = build_spatial_operator(8, 8, 3, 1.7, 2).unwrap();
        let scene = synthesize_observations(&gt, &f, &g, f64::INFINITY, f64::INFINITY, 3).unwrap();
        assert!(scene.y_m.sub(&f.matmul(&gt.x)).max_abs() == 0.0);
        assert!(scene.y_h.sub(&g.apply(&gt.x)).max_abs() == 0.0);
    }

    #[test]
    fn realized_snr_close_to_target() {
        // >= 1e4 entries per observation for the concentration to hold.
        let gt = generate_ground_truth(16, 4, 64, 64, 11, 4).unwrap();
        let f = build_band_average_f(16, 4).unwrap();
        let g = build_spatial_operator(64, 64, 3, 1.7, 2).unwrap();
        let target = 30.0;
        let scene = synthesize_observations(&gt, &f, &g, target, target, 13).unwrap();
        let clean_m = f.matmul(&gt.x);
        let noise_m = scene.y_m.sub(&clean_m);
        let realized = 10.0 * (clean_m.frob_norm_sq() / noise_m.frob_norm_sq()).log10();
        assert!(
            (realized - target).abs() <= 0.5,
            "realized SNR {realized} notin {target} +- 0.5"
        );
        let clean_h = g.apply(&gt.x);
        let noise_h = scene.y_h.sub(&clean_h);
        let realized_h = 10.0 * (clean_h.frob_norm_sq() / noise_h.frob_norm_sq()).log10();
        assert!((realized_h - target).abs() <= 0.5);
    }

    #[test]
    fn scene_reproducible_for_fixed_seed() {
        let gt = generate_ground_truth(8, 3, 8, 8, 21, 2).unwrap();
        let f = build_band_average_f(8, 3).unwrap();
        let g = build_spatial_operator(8, 8, 3, 1.7, 2).unwrap();
        let s1 = synthesize_observations(&gt, &f, &g, 20.0, 25.0, 5).unwrap();
        let s2 = synthesize_observations(&gt, &f, &g, 20.0, 25.0, 5).unwrap();
        assert_eq!(s1.y_m, s2.y_m);
        assert_eq!(s1.y_h, s2.y_h);
    }

    #[test]
    fn preset_dimension_arithmetic() {
        let spec = ScenePreset::CupriteLike.spec();
        assert_eq!(spec.l_x * spec.l_y / (spec.factor * spec.factor), 30 * 30);
        assert_eq!((spec.m, spec.m_m, spec.n), (224, 6, 10));

        let mut desk = ScenePreset::ChikuseiLike.spec();
        desk.l_x = 64;
        desk.l_y = 64;
        assert_eq!(desk.factor, 8);
        let scene = wald_scene(
            &ScenePreset::Custom(SceneSpec {
                m: 16,
                n: 4,
                ..desk
            }),
            3,
        )
        .unwrap();
        assert_eq!(scene.dims.l_h, 64);
        assert!(scene.ground_truth.is_some());
    }
}
