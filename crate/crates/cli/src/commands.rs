//! Command implementations behind the CLI surface.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use hibcd::cosmf::{solve, CosmfProblem, CosmfSolution, Variant};
use hibcd::engine::{inner_repeat_bound, RepeatBound, SolverTrace, UpdateRule};
use hibcd::metrics::{ergas, naive_interpolation, psnr_per_band, sam};
use hibcd::sensing::{wald_scene, ScenePair, ScenePreset};
use hibcd::DenseMatrix;

use crate::config::{thread_cap, ExperimentConfig, PresetName, RuleName, VariantName};
use crate::container::{read_matrix, read_operator, write_matrix, write_operator};
use crate::error::{CliError, CliResult};

/// Scene metadata written next to the containers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifest {
    pub preset: String,
    pub m: usize,
    pub m_m: usize,
    pub n: usize,
    pub l_x: usize,
    pub l_y: usize,
    pub l_h: usize,
    pub factor: usize,
    pub seed: u64,
    /// Targets in dB; `null` means noiseless.
    pub snr_m_db: Option<f64>,
    pub snr_h_db: Option<f64>,
    /// Measured against the clean decimated signal.
    pub realized_snr_m_db: Option<f64>,
    pub realized_snr_h_db: Option<f64>,
    pub files: Vec<String>,
}

fn snr_to_option(v: f64) -> Option<f64> {
    if v.is_infinite() {
        None
    } else {
        Some(v)
    }
}

fn realized_snr(clean: &DenseMatrix, noisy: &DenseMatrix) -> Option<f64> {
    let noise = noisy.sub(clean);
    let np = noise.frob_norm_sq();
    if np == 0.0 {
        None
    } else {
        Some(10.0 * (clean.frob_norm_sq() / np).log10())
    }
}

fn ensure_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn preset_label(p: PresetName) -> &'static str {
    match p {
        PresetName::ChikuseiLike => "chikusei-like",
        PresetName::CupriteLike => "cuprite-like",
        PresetName::Custom => "custom",
    }
}

/// Generates a synthetic scene and persists observations, operators, ground
/// truth, and a manifest into the output directory.
pub fn cmd_generate(config: &ExperimentConfig) -> CliResult<SceneManifest> {
    config.validate()?;
    let spec = config.scene_spec()?;
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("scene"));
    ensure_dir(&out)?;

    let scene = wald_scene(&ScenePreset::Custom(spec), config.seed).map_err(CliError::from)?;
    let gt = scene.ground_truth.as_ref().expect("generator keeps truth");

    let clean_m = scene.f.matmul(&gt.x);
    let clean_h = scene.g.apply(&gt.x);

    write_matrix(&out, "y_m", &scene.y_m, "MS observation Y_M")?;
    write_matrix(&out, "y_h", &scene.y_h, "HS observation Y_H")?;
    write_matrix(&out, "f", &scene.f, "spectral decimation F")?;
    write_matrix(&out, "gt_a", &gt.a, "ground-truth endmembers A*")?;
    write_matrix(&out, "gt_s", &gt.s, "ground-truth abundances S*")?;
    write_matrix(&out, "gt_x", &gt.x, "ground-truth image X*")?;
    write_operator(&out, "g", &scene.g)?;

    let manifest = SceneManifest {
        preset: preset_label(config.preset).to_string(),
        m: scene.dims.m,
        m_m: scene.dims.m_m,
        n: scene.dims.n,
        l_x: scene.dims.l_x,
        l_y: scene.dims.l_y,
        l_h: scene.dims.l_h,
        factor: scene.dims.factor,
        seed: config.seed,
        snr_m_db: snr_to_option(scene.snr_m_db),
        snr_h_db: snr_to_option(scene.snr_h_db),
        realized_snr_m_db: realized_snr(&clean_m, &scene.y_m),
        realized_snr_h_db: realized_snr(&clean_h, &scene.y_h),
        files: vec![
            "y_m".into(),
            "y_h".into(),
            "f".into(),
            "g".into(),
            "gt_a".into(),
            "gt_s".into(),
            "gt_x".into(),
        ],
    };
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::format(&path, e.to_string()))?;
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(manifest)
}

/// A scene loaded back from disk; ground truth is optional.
pub struct LoadedScene {
    pub manifest: SceneManifest,
    pub scene: ScenePair,
}

pub fn load_scene(dir: &Path) -> CliResult<LoadedScene> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let manifest: SceneManifest =
        serde_json::from_str(&text).map_err(|e| CliError::format(&path, e.to_string()))?;
    let (y_m, _) = read_matrix(dir, "y_m")?;
    let (y_h, _) = read_matrix(dir, "y_h")?;
    let (f, _) = read_matrix(dir, "f")?;
    let g = read_operator(dir, "g")?;
    let ground_truth = if dir.join("gt_x.json").exists() {
        let (a, _) = read_matrix(dir, "gt_a")?;
        let (s, _) = read_matrix(dir, "gt_s")?;
        let (x, _) = read_matrix(dir, "gt_x")?;
        Some(hibcd::sensing::GroundTruth { a, s, x })
    } else {
        None
    };
    let dims = hibcd::sensing::SceneDims {
        m: manifest.m,
        m_m: manifest.m_m,
        n: manifest.n,
        l_x: manifest.l_x,
        l_y: manifest.l_y,
        l_h: manifest.l_h,
        factor: manifest.factor,
    };
    let scene = ScenePair {
        y_m,
        y_h,
        f,
        g,
        snr_m_db: manifest.snr_m_db.unwrap_or(f64::INFINITY),
        snr_h_db: manifest.snr_h_db.unwrap_or(f64::INFINITY),
        seed: manifest.seed,
        dims,
        ground_truth,
    };
    Ok(LoadedScene { manifest, scene })
}

fn build_problem(config: &ExperimentConfig, loaded: &LoadedScene) -> CliResult<CosmfProblem> {
    let n = config.model_order.unwrap_or(loaded.manifest.n);
    let variant: Variant = config.variant.into();
    let tau = match (&config.tau, variant) {
        (Some(t), _) => t.resolve(n)?,
        (None, Variant::Plain) => Vec::new(),
        (None, Variant::Nnc) => {
            return Err(CliError::config("NNC variant requires tau"));
        }
    };
    CosmfProblem::new(
        loaded.scene.y_m.clone(),
        loaded.scene.y_h.clone(),
        loaded.scene.f.clone(),
        loaded.scene.g.clone(),
        n,
        variant,
        tau,
        loaded.manifest.l_x,
        loaded.manifest.l_y,
    )
    .map_err(CliError::from)
}

/// Per-run summary persisted next to the solution containers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub variant: String,
    pub rule_a: String,
    pub rule_s: String,
    pub iterations: usize,
    pub stop_reason: String,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub elapsed_secs: f64,
    pub total_backtracks: usize,
    pub delta_a: f64,
    pub delta_s: f64,
}

fn write_trace_csv(path: &Path, trace: &SolverTrace) -> CliResult<()> {
    let mut file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut text = String::from(
        "iter,elapsed_ms,objective,fw_gap_total,fw_gap_A,fw_gap_S,beta_or_gamma_A,beta_or_gamma_S,alpha_k,descent_ok\n",
    );
    let opt = |v: Option<f64>| match v {
        Some(x) => format!("{x}"),
        None => "nan".to_string(),
    };
    for r in &trace.records {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            r.elapsed_secs * 1e3,
            r.objective,
            opt(r.fw_gap_total),
            opt(r.block_gaps.first().copied().flatten()),
            opt(r.block_gaps.get(1).copied().flatten()),
            r.step_values.first().copied().unwrap_or(f64::NAN),
            r.step_values.get(1).copied().unwrap_or(f64::NAN),
            r.alpha,
            if r.descent_ok { 1 } else { 0 },
        ));
    }
    file.write_all(text.as_bytes())
        .map_err(|e| CliError::io(path, e))
}

/// Runs the solver against a scene on disk; writes `a`, `s`, `x_hat`
/// containers, `trace.csv`, and `solve_summary.json`.
pub fn cmd_solve(config: &ExperimentConfig) -> CliResult<SolveSummary> {
    config.validate()?;
    let scene_dir = config
        .scene_dir
        .clone()
        .ok_or_else(|| CliError::config("solve requires scene_dir"))?;
    let loaded = load_scene(&scene_dir)?;
    let problem = build_problem(config, &loaded)?;
    let out = config.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    ensure_dir(&out)?;

    let solve_config = config.solve_config();
    let started = Instant::now();
    let solution = match solve(&problem, &solve_config, config.seed) {
        Ok(s) => s,
        Err(failure) => {
            // Flush whatever trace exists before reporting the failure.
            let _ = write_trace_csv(&out.join("trace.csv"), &failure.trace);
            return Err(CliError::Numerical(failure.error.to_string()));
        }
    };
    let elapsed = started.elapsed().as_secs_f64();

    write_matrix(&out, "a", &solution.a, "endmember estimate A")?;
    write_matrix(&out, "s", &solution.s, "abundance estimate S")?;
    write_matrix(&out, "x_hat", &solution.x_hat, "image estimate X = A S")?;
    write_trace_csv(&out.join("trace.csv"), &solution.trace)?;

    let summary = SolveSummary {
        variant: format!("{:?}", config.variant).to_lowercase(),
        rule_a: config.rule_a.to_string(),
        rule_s: config.rule_s.to_string(),
        iterations: solution.trace.iterations(),
        stop_reason: solution.trace.stop_reason.as_str().to_string(),
        initial_objective: solution.trace.initial_objective,
        final_objective: solution.trace.final_objective(),
        elapsed_secs: elapsed,
        total_backtracks: solution.trace.total_backtracks(),
        delta_a: solution.delta_a,
        delta_s: solution.delta_s,
    };
    let path = out.join("solve_summary.json");
    let text = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::format(&path, e.to_string()))?;
    fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(summary)
}

/// Metric report for one estimate against the scene's ground truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub mean_sam_rad: f64,
    pub mean_sam_deg: f64,
    pub psnr_per_band_db: Vec<f64>,
    pub mean_psnr_db: f64,
    pub ergas: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub solution: MetricReport,
    pub objective: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub naive_baseline: Option<MetricReport>,
}

fn metric_report(x: &DenseMatrix, x_hat: &DenseMatrix, m_m: usize) -> CliResult<MetricReport> {
    let sam_res = sam(x, x_hat).map_err(CliError::from)?;
    let psnr = psnr_per_band(x, x_hat).map_err(CliError::from)?;
    let finite: Vec<f64> = psnr.iter().copied().filter(|v| v.is_finite()).collect();
    let mean_psnr = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    let erg = ergas(x, x_hat, m_m, x.rows()).map_err(CliError::from)?;
    Ok(MetricReport {
        mean_sam_rad: sam_res.mean_rad,
        mean_sam_deg: sam_res.mean_deg(),
        psnr_per_band_db: psnr,
        mean_psnr_db: mean_psnr,
        ergas: erg,
    })
}

/// Scores a solution directory against its scene; optionally includes the
/// bicubic-interpolation baseline.
pub fn cmd_evaluate(
    solution_dir: &Path,
    scene_dir: &Path,
    with_baseline: bool,
) -> CliResult<EvaluateReport> {
    let loaded = load_scene(scene_dir)?;
    let gt = loaded
        .scene
        .ground_truth
        .as_ref()
        .ok_or_else(|| CliError::config("scene has no ground truth to evaluate against"))?;
    let (x_hat, _) = read_matrix(solution_dir, "x_hat")?;
    let (a, _) = read_matrix(solution_dir, "a")?;
    let (s, _) = read_matrix(solution_dir, "s")?;

    let solution = metric_report(&gt.x, &x_hat, loaded.manifest.m_m)?;
    // Objective of the stored factors on the stored observations.
    let fa = loaded.scene.f.matmul(&a);
    let rm = fa.matmul(&s).sub(&loaded.scene.y_m);
    let rh = a.matmul(&loaded.scene.g.apply(&s)).sub(&loaded.scene.y_h);
    let objective = 0.5 * rm.frob_norm_sq() + 0.5 * rh.frob_norm_sq();

    let naive_baseline = if with_baseline {
        let interp = naive_interpolation(
            &loaded.scene.y_h,
            loaded.manifest.l_x,
            loaded.manifest.l_y,
            loaded.manifest.factor,
        )
        .map_err(CliError::from)?;
        Some(metric_report(&gt.x, &interp, loaded.manifest.m_m)?)
    } else {
        None
    };
    Ok(EvaluateReport {
        solution,
        objective,
        naive_baseline,
    })
}

/// One benchmark row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub variant: String,
    pub rules: String,
    pub time_secs: f64,
    pub iterations: usize,
    pub time_per_iter_secs: f64,
    pub objective: f64,
    pub ergas: f64,
    pub mean_sam_deg: f64,
}

const BENCH_RULES: [(RuleName, RuleName); 3] = [
    (RuleName::Fpg, RuleName::Fpg),
    (RuleName::Fpg, RuleName::Fw),
    (RuleName::Fw, RuleName::Fw),
];

fn bench_one(
    problem: &CosmfProblem,
    config: &ExperimentConfig,
    rule_a: RuleName,
    rule_s: RuleName,
    gt_x: &DenseMatrix,
    m_m: usize,
) -> CliResult<BenchmarkRow> {
    let mut solve_config = config.solve_config();
    solve_config.rule_a = rule_a.into();
    solve_config.rule_s = rule_s.into();
    // Wall-clock fidelity: no gap tracking unless a gap stop is requested.
    if config.gap_tol.is_none() {
        solve_config.gap_every = 0;
    }
    let started = Instant::now();
    let solution: CosmfSolution = solve(problem, &solve_config, config.seed)
        .map_err(|f| CliError::Numerical(f.error.to_string()))?;
    let time_secs = started.elapsed().as_secs_f64();
    let iterations = solution.trace.iterations().max(1);
    let report = metric_report(gt_x, &solution.x_hat, m_m)?;
    Ok(BenchmarkRow {
        variant: match problem.variant {
            Variant::Plain => "plain".to_string(),
            Variant::Nnc => "nnc".to_string(),
        },
        rules: format!("{rule_a}-{rule_s}"),
        time_secs,
        iterations,
        time_per_iter_secs: time_secs / iterations as f64,
        objective: solution.trace.final_objective(),
        ergas: report.ergas,
        mean_sam_deg: report.mean_sam_deg,
    })
}

/// Runs the `{FPG-FPG, FPG-FW, FW-FW} x {plain, NNC}` matrix on one scene.
///
/// Sequential by default; `parallel` runs the six variants on worker threads
/// capped by `HIBCD_THREADS`.
pub fn cmd_benchmark(config: &ExperimentConfig, parallel: bool) -> CliResult<Vec<BenchmarkRow>> {
    config.validate()?;
    if config.tau.is_none() {
        return Err(CliError::config(
            "benchmark covers the NNC variant and therefore requires tau",
        ));
    }
    let spec = config.scene_spec()?;
    let scene = wald_scene(&ScenePreset::Custom(spec), config.seed).map_err(CliError::from)?;
    let gt = scene.ground_truth.clone().expect("generator keeps truth");
    let n = config.model_order.unwrap_or(scene.dims.n);
    let tau = config.tau.as_ref().unwrap().resolve(n)?;

    let mut problems = Vec::new();
    for variant in [Variant::Plain, Variant::Nnc] {
        problems.push(
            CosmfProblem::new(
                scene.y_m.clone(),
                scene.y_h.clone(),
                scene.f.clone(),
                scene.g.clone(),
                n,
                variant,
                tau.clone(),
                scene.dims.l_x,
                scene.dims.l_y,
            )
            .map_err(CliError::from)?,
        );
    }

    let jobs: Vec<(usize, RuleName, RuleName)> = (0..2)
        .flat_map(|p| BENCH_RULES.iter().map(move |&(a, s)| (p, a, s)))
        .collect();

    let mut rows: Vec<Option<BenchmarkRow>> = (0..jobs.len()).map(|_| None).collect();
    let workers = if parallel { thread_cap() } else { 1 };
    if workers <= 1 {
        for (slot, (p, a, s)) in jobs.iter().enumerate() {
            rows[slot] = Some(bench_one(
                &problems[*p],
                config,
                *a,
                *s,
                &gt.x,
                scene.dims.m_m,
            )?);
        }
    } else {
        // One solver instance per variant; no shared mutable state.
        std::thread::scope(|scope| -> CliResult<()> {
            let mut pending: Vec<_> = jobs.iter().enumerate().collect();
            while !pending.is_empty() {
                let batch: Vec<_> = pending.drain(..pending.len().min(workers)).collect();
                let handles: Vec<_> = batch
                    .into_iter()
                    .map(|(slot, (p, a, s))| {
                        let problem = &problems[*p];
                        let gt_x = &gt.x;
                        (
                            slot,
                            scope.spawn(move || {
                                bench_one(problem, config, *a, *s, gt_x, scene.dims.m_m)
                            }),
                        )
                    })
                    .collect();
                for (slot, handle) in handles {
                    let row = handle
                        .join()
                        .map_err(|_| CliError::Numerical("benchmark worker panicked".into()))??;
                    rows[slot] = Some(row);
                }
            }
            Ok(())
        })?;
    }
    let rows: Vec<BenchmarkRow> = rows.into_iter().map(|r| r.unwrap()).collect();

    if let Some(out) = &config.out {
        ensure_dir(out)?;
        let path = out.join("benchmark.csv");
        let mut text = String::from(
            "variant,rules,time_secs,iterations,time_per_iter_secs,objective,ergas,mean_sam_deg\n",
        );
        for r in &rows {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.variant,
                r.rules,
                r.time_secs,
                r.iterations,
                r.time_per_iter_secs,
                r.objective,
                r.ergas,
                r.mean_sam_deg
            ));
        }
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(rows)
}

pub fn format_benchmark_table(rows: &[BenchmarkRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<7} {:<9} {:>10} {:>7} {:>12} {:>14} {:>9} {:>9}\n",
        "variant", "rules", "time (s)", "iters", "s/iter", "objective", "ERGAS", "SAM (deg)"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<7} {:<9} {:>10.3} {:>7} {:>12.6} {:>14.6e} {:>9.4} {:>9.4}\n",
            r.variant,
            r.rules,
            r.time_secs,
            r.iterations,
            r.time_per_iter_secs,
            r.objective,
            r.ergas,
            r.mean_sam_deg
        ));
    }
    out
}

/// Wraps the inner-repeat bound analysis.
pub fn cmd_recommend_repeats(
    rule: RuleName,
    eta: f64,
    rho_over_beta: f64,
) -> CliResult<RepeatBound> {
    if eta < 1.0 {
        return Err(CliError::config("eta must be >= 1"));
    }
    if !(0.0..=1.0).contains(&rho_over_beta) {
        return Err(CliError::config("rho/beta must lie in [0, 1]"));
    }
    let rule: UpdateRule = rule.into();
    Ok(inner_repeat_bound(rule, eta, rho_over_beta))
}

/// Variant label helper shared with `main`.
pub fn variant_label(v: VariantName) -> &'static str {
    match v {
        VariantName::Plain => "plain",
        VariantName::Nnc => "nnc",
    }
}
