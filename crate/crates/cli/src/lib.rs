//! Library surface of the experiment runner: container I/O, experiment
//! configuration, and the command implementations behind the `hibcd` binary.

pub mod commands;
pub mod config;
pub mod container;
pub mod error;

pub use commands::{
    cmd_benchmark, cmd_evaluate, cmd_generate, cmd_recommend_repeats, cmd_solve,
    format_benchmark_table, load_scene, BenchmarkRow, EvaluateReport, SceneManifest, SolveSummary,
};
pub use config::{ExperimentConfig, PresetName, RuleName, VariantName};
pub use container::{read_matrix, read_operator, write_matrix, write_operator, MatrixHeader};
pub use error::{CliError, CliResult};
