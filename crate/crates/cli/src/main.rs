//! `hibcd` binary: scene generation, solving, evaluation, and benchmarking
//! for coupled structured matrix factorization.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hibcd_cli::commands::{
    cmd_benchmark, cmd_evaluate, cmd_generate, cmd_recommend_repeats, cmd_solve,
    format_benchmark_table,
};
use hibcd_cli::config::{ExperimentConfig, PresetName, RuleName, VariantName};
use hibcd_cli::error::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "hibcd",
    about = "Hybrid inexact BCD for coupled matrix factorization",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Experiment config file (JSON); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scene preset: chikusei-like | cuprite-like | custom.
    #[arg(long)]
    preset: Option<String>,
    /// Constraint variant: plain | nnc.
    #[arg(long)]
    variant: Option<String>,
    /// Update rules for A and S, e.g. "fpg,fw".
    #[arg(long)]
    rules: Option<String>,
    /// Outer-iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Objective-change stopping tolerance.
    #[arg(long)]
    obj_tol: Option<f64>,
    /// FW-gap stopping tolerance.
    #[arg(long)]
    gap_tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene and write it to disk.
    Generate {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Solve a scene from disk and write the solution plus trace.
    Solve {
        #[command(flatten)]
        common: CommonOpts,
        /// Scene directory (defaults to the config's scene_dir).
        #[arg(long)]
        scene: Option<PathBuf>,
    },
    /// Score a solution directory against its scene's ground truth.
    Evaluate {
        /// Solution directory (with a/s/x_hat containers).
        #[arg(long)]
        solution: PathBuf,
        /// Scene directory.
        #[arg(long)]
        scene: PathBuf,
        /// Also score the bicubic naive-interpolation baseline.
        #[arg(long)]
        baseline: bool,
    },
    /// Run the {FPG-FPG, FPG-FW, FW-FW} x {plain, NNC} comparison matrix.
    Benchmark {
        #[command(flatten)]
        common: CommonOpts,
        /// Run variants on worker threads (capped by HIBCD_THREADS).
        #[arg(long)]
        parallel: bool,
    },
    /// Recommended inner repeats L for a block, from the constant analysis.
    RecommendRepeats {
        /// Update rule: fpg | fw.
        #[arg(long)]
        rule: String,
        /// Step-size quality eta (>= 1).
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        /// Weak-convexity ratio rho/beta in [0, 1].
        #[arg(long, default_value_t = 0.0)]
        rho_over_beta: f64,
    },
}

fn parse_preset(s: &str) -> CliResult<PresetName> {
    match s.to_ascii_lowercase().as_str() {
        "chikusei-like" | "chikusei" => Ok(PresetName::ChikuseiLike),
        "cuprite-like" | "cuprite" => Ok(PresetName::CupriteLike),
        "custom" => Ok(PresetName::Custom),
        other => Err(CliError::config(format!("unknown preset '{other}'"))),
    }
}

fn parse_variant(s: &str) -> CliResult<VariantName> {
    match s.to_ascii_lowercase().as_str() {
        "plain" => Ok(VariantName::Plain),
        "nnc" => Ok(VariantName::Nnc),
        other => Err(CliError::config(format!("unknown variant '{other}'"))),
    }
}

fn parse_rule(s: &str) -> CliResult<RuleName> {
    match s.to_ascii_lowercase().as_str() {
        "fpg" => Ok(RuleName::Fpg),
        "fw" => Ok(RuleName::Fw),
        other => Err(CliError::config(format!("unknown update rule '{other}'"))),
    }
}

fn apply_common(common: &CommonOpts) -> CliResult<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out = Some(out.clone());
    }
    if let Some(preset) = &common.preset {
        config.preset = parse_preset(preset)?;
    }
    if let Some(variant) = &common.variant {
        config.variant = parse_variant(variant)?;
    }
    if let Some(rules) = &common.rules {
        let parts: Vec<&str> = rules.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(CliError::config("--rules expects \"<A>,<S>\", e.g. fpg,fw"));
        }
        config.rule_a = parse_rule(parts[0])?;
        config.rule_s = parse_rule(parts[1])?;
    }
    if let Some(v) = common.max_iter {
        config.max_iter = v;
    }
    if let Some(v) = common.obj_tol {
        config.obj_tol = v;
    }
    if let Some(v) = common.gap_tol {
        config.gap_tol = Some(v);
    }
    config.validate()?;
    Ok(config)
}

fn run() -> CliResult<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { common } => {
            let config = apply_common(&common)?;
            let manifest = cmd_generate(&config)?;
            println!(
                "scene written: {} bands x {} px -> {} MS bands, {} HS px (seed {})",
                manifest.m,
                manifest.l_x * manifest.l_y,
                manifest.m_m,
                manifest.l_h,
                manifest.seed
            );
            if let Some(snr) = manifest.realized_snr_m_db {
                println!("realized SNR: MS {snr:.2} dB");
            }
            if let Some(snr) = manifest.realized_snr_h_db {
                println!("realized SNR: HS {snr:.2} dB");
            }
            Ok(())
        }
        Command::Solve { common, scene } => {
            let mut config = apply_common(&common)?;
            if let Some(scene) = scene {
                config.scene_dir = Some(scene);
            }
            let summary = cmd_solve(&config)?;
            println!(
                "{}-{} ({}) stopped by {} after {} iterations; objective {:.6e} ({}s)",
                summary.rule_a,
                summary.rule_s,
                summary.variant,
                summary.stop_reason,
                summary.iterations,
                summary.final_objective,
                summary.elapsed_secs
            );
            Ok(())
        }
        Command::Evaluate {
            solution,
            scene,
            baseline,
        } => {
            let report = cmd_evaluate(&solution, &scene, baseline)?;
            let text = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::config(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
        Command::Benchmark { common, parallel } => {
            let config = apply_common(&common)?;
            let rows = cmd_benchmark(&config, parallel)?;
            print!("{}", format_benchmark_table(&rows));
            Ok(())
        }
        Command::RecommendRepeats {
            rule,
            eta,
            rho_over_beta,
        } => {
            let rule = parse_rule(&rule)?;
            let bound = cmd_recommend_repeats(rule, eta, rho_over_beta)?;
            println!("bound {} / recommended {}", bound.bound, bound.recommended);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
