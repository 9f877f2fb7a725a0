//! Command-level integration tests: generate/solve/evaluate/benchmark flows,
//! determinism, and exit codes of the binary.

use std::fs;
use std::path::Path;
use std::process::Command;

use hibcd_cli::commands::{cmd_benchmark, cmd_evaluate, cmd_generate, cmd_solve, load_scene};
use hibcd_cli::config::ExperimentConfig;
use hibcd_cli::container::write_matrix;
use hibcd_cli::error::CliError;

fn toy_config(out: &Path) -> ExperimentConfig {
    let mut config: ExperimentConfig = serde_json::from_str(
        r#"{
            "preset": "custom",
            "bands": 8, "ms_bands": 3, "model_order": 3,
            "width": 8, "height": 8, "factor": 2, "kernel_width": 3,
            "snr_db": 30.0, "smoothness": 2,
            "tau": 2.0,
            "seed": 5
        }"#,
    )
    .unwrap();
    config.out = Some(out.to_path_buf());
    config
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

#[test]
fn generate_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    let manifest_a = cmd_generate(&toy_config(&dir_a)).unwrap();
    let manifest_b = cmd_generate(&toy_config(&dir_b)).unwrap();
    assert_eq!(manifest_a.seed, manifest_b.seed);
    let bytes_a = dir_bytes(&dir_a);
    let bytes_b = dir_bytes(&dir_b);
    assert_eq!(bytes_a.len(), bytes_b.len());
    for ((name_a, a), (name_b, b)) in bytes_a.iter().zip(&bytes_b) {
        assert_eq!(name_a, name_b);
        assert_eq!(a, b, "{name_a} differs between identical-seed runs");
    }
    // Manifest records the realized SNR.
    assert!(manifest_a.realized_snr_m_db.is_some());
    let snr = manifest_a.realized_snr_m_db.unwrap();
    assert!(
        (snr - 30.0).abs() < 3.0,
        "realized SNR {snr} far from target"
    );
}

#[test]
fn solve_writes_solution_trace_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = tmp.path().join("scene");
    cmd_generate(&toy_config(&scene_dir)).unwrap();

    let mut config = toy_config(&tmp.path().join("run"));
    config.scene_dir = Some(scene_dir.clone());
    config.max_iter = 500;
    let summary = cmd_solve(&config).unwrap();
    assert!(summary.iterations > 0 && summary.iterations <= 500);
    assert!(["obj_tol", "max_iter", "gap_tol"].contains(&summary.stop_reason.as_str()));

    let run = tmp.path().join("run");
    for name in ["a", "s", "x_hat"] {
        assert!(run.join(format!("{name}.bin")).exists());
        assert!(run.join(format!("{name}.json")).exists());
    }
    let trace = fs::read_to_string(run.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    let header = lines.next().unwrap();
    assert_eq!(
        header,
        "iter,elapsed_ms,objective,fw_gap_total,fw_gap_A,fw_gap_S,beta_or_gamma_A,beta_or_gamma_S,alpha_k,descent_ok"
    );
    assert_eq!(lines.count(), summary.iterations, "one row per iteration");
}

#[test]
fn evaluate_ground_truth_against_itself_is_perfect() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = tmp.path().join("scene");
    cmd_generate(&toy_config(&scene_dir)).unwrap();

    // A "solution" that is exactly the ground truth.
    let loaded = load_scene(&scene_dir).unwrap();
    let gt = loaded.scene.ground_truth.as_ref().unwrap();
    let sol_dir = tmp.path().join("sol");
    fs::create_dir_all(&sol_dir).unwrap();
    write_matrix(&sol_dir, "a", &gt.a, "A").unwrap();
    write_matrix(&sol_dir, "s", &gt.s, "S").unwrap();
    write_matrix(&sol_dir, "x_hat", &gt.x, "X").unwrap();

    let report = cmd_evaluate(&sol_dir, &scene_dir, true).unwrap();
    assert!(report.solution.mean_sam_rad < 1e-7);
    assert!(report.solution.ergas < 1e-9);
    assert!(report
        .solution
        .psnr_per_band_db
        .iter()
        .all(|v| v.is_infinite()));
    let baseline = report.naive_baseline.unwrap();
    assert!(baseline.ergas > report.solution.ergas);
}

#[test]
fn benchmark_covers_full_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = toy_config(&tmp.path().join("bench"));
    config.max_iter = 60;
    let rows = cmd_benchmark(&config, false).unwrap();
    assert_eq!(rows.len(), 6);
    let mut variants: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
    variants.dedup();
    assert_eq!(variants, vec!["plain", "nnc"]);
    for row in &rows {
        assert!(row.iterations >= 1);
        let per_iter = row.time_secs / row.iterations as f64;
        assert!((row.time_per_iter_secs - per_iter).abs() < 1e-12);
    }
    let csv = fs::read_to_string(tmp.path().join("bench/benchmark.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7, "header plus six rows");
}

#[test]
fn solve_outputs_are_seed_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = tmp.path().join("scene");
    cmd_generate(&toy_config(&scene_dir)).unwrap();
    let mut runs = Vec::new();
    for label in ["r1", "r2"] {
        let mut config = toy_config(&tmp.path().join(label));
        config.scene_dir = Some(scene_dir.clone());
        config.max_iter = 40;
        cmd_solve(&config).unwrap();
        runs.push(tmp.path().join(label));
    }
    for name in ["a.bin", "s.bin", "x_hat.bin"] {
        let a = fs::read(runs[0].join(name)).unwrap();
        let b = fs::read(runs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical solve runs");
    }
}

#[test]
fn evaluate_report_matches_direct_metric_calls() {
    let tmp = tempfile::tempdir().unwrap();
    let scene_dir = tmp.path().join("scene");
    cmd_generate(&toy_config(&scene_dir)).unwrap();
    let loaded = load_scene(&scene_dir).unwrap();
    let gt = loaded.scene.ground_truth.as_ref().unwrap();

    // A slightly perturbed estimate with nontrivial metric values.
    let x_hat = gt.x.map(|v| v + 0.01);
    let sol_dir = tmp.path().join("sol");
    fs::create_dir_all(&sol_dir).unwrap();
    write_matrix(&sol_dir, "a", &gt.a, "A").unwrap();
    write_matrix(&sol_dir, "s", &gt.s, "S").unwrap();
    write_matrix(&sol_dir, "x_hat", &x_hat, "X").unwrap();

    let report = cmd_evaluate(&sol_dir, &scene_dir, false).unwrap();
    let sam = hibcd::metrics::sam(&gt.x, &x_hat).unwrap();
    let psnr = hibcd::metrics::psnr_per_band(&gt.x, &x_hat).unwrap();
    let erg = hibcd::metrics::ergas(&gt.x, &x_hat, loaded.manifest.m_m, gt.x.rows()).unwrap();
    assert_eq!(report.solution.mean_sam_rad, sam.mean_rad);
    assert_eq!(report.solution.psnr_per_band_db, psnr);
    assert_eq!(report.solution.ergas, erg);
}

#[test]
fn nnc_without_tau_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = toy_config(tmp.path());
    config.variant = hibcd_cli::config::VariantName::Nnc;
    config.tau = None;
    let err = config.validate().unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn binary_exit_codes_and_recommend_repeats() {
    let bin = env!("CARGO_BIN_EXE_hibcd");
    let tmp = tempfile::tempdir().unwrap();

    // Config error (unknown key) -> exit 2.
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"bogus_key": 1}"#).unwrap();
    let out = Command::new(bin)
        .args(["generate", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Missing scene -> I/O error, exit 4.
    let out = Command::new(bin)
        .args(["solve", "--scene"])
        .arg(tmp.path().join("nope"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));

    // recommend-repeats prints the bound and recommendation.
    let out = Command::new(bin)
        .args(["recommend-repeats", "--rule", "fpg", "--eta", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("bound 2 / recommended 1"), "got: {text}");
}

#[test]
fn parallel_benchmark_respects_thread_cap() {
    // HIBCD_THREADS unset defaults the cap to 1; the parallel path must
    // still produce all six rows.
    let tmp = tempfile::tempdir().unwrap();
    let mut config = toy_config(&tmp.path().join("bench"));
    config.out = None;
    config.max_iter = 25;
    let rows = cmd_benchmark(&config, true).unwrap();
    assert_eq!(rows.len(), 6);
}
