//! Experiment configuration: JSON file with strict key checking, plus the
//! mapping onto scene specs and solver configs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hibcd::cosmf::{InitStrategy, SolveConfig, StepEig, Variant};
use hibcd::engine::{ExtrapolationMode, StopRule, UpdateRule};
use hibcd::sensing::{ScenePreset, SceneSpec};

use crate::error::{CliError, CliResult};

/// Scene preset families. `Custom` starts from desk-scale defaults and takes
/// every dimension from the config's override fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    ChikuseiLike,
    CupriteLike,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantName {
    Plain,
    Nnc,
}

impl From<VariantName> for Variant {
    fn from(v: VariantName) -> Variant {
        match v {
            VariantName::Plain => Variant::Plain,
            VariantName::Nnc => Variant::Nnc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleName {
    Fpg,
    Fw,
}

impl From<RuleName> for UpdateRule {
    fn from(r: RuleName) -> UpdateRule {
        match r {
            RuleName::Fpg => UpdateRule::Fpg,
            RuleName::Fw => UpdateRule::Fw,
        }
    }
}

impl std::fmt::Display for RuleName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RuleName::Fpg => write!(f, "FPG"),
            RuleName::Fw => write!(f, "FW"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtrapolationName {
    Fista,
    FistaSquared,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitName {
    DataDriven,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigName {
    Power,
    Dense,
}

/// Per-material radii: one shared value or an explicit list.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSetting {
    Shared(f64),
    PerMaterial(Vec<f64>),
}

impl TauSetting {
    pub fn resolve(&self, n: usize) -> CliResult<Vec<f64>> {
        match self {
            TauSetting::Shared(t) => Ok(vec![*t; n]),
            TauSetting::PerMaterial(v) => {
                if v.len() != n {
                    return Err(CliError::config(format!(
                        "tau list has {} entries, model order is {n}",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

/// The experiment file. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    // Scene.
    #[serde(default = "defaults::preset")]
    pub preset: PresetName,
    pub bands: Option<usize>,
    pub ms_bands: Option<usize>,
    pub model_order: Option<usize>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub factor: Option<usize>,
    pub kernel_width: Option<usize>,
    pub sigma: Option<f64>,
    /// Shared SNR target in dB for both sensors; `null` means noiseless.
    pub snr_db: Option<f64>,
    pub snr_m_db: Option<f64>,
    pub snr_h_db: Option<f64>,
    pub smoothness: Option<usize>,

    // Solver.
    #[serde(default = "defaults::variant")]
    pub variant: VariantName,
    #[serde(default = "defaults::rule_a")]
    pub rule_a: RuleName,
    #[serde(default = "defaults::rule_s")]
    pub rule_s: RuleName,
    pub tau: Option<TauSetting>,
    pub delta_a: Option<f64>,
    pub delta_s: Option<f64>,
    #[serde(default = "defaults::extrapolation")]
    pub extrapolation: ExtrapolationName,
    pub alpha: Option<f64>,
    #[serde(default = "defaults::alpha_cap")]
    pub alpha_cap: f64,
    #[serde(default = "defaults::one")]
    pub repeats_a: usize,
    #[serde(default = "defaults::one")]
    pub repeats_s: usize,
    #[serde(default = "defaults::obj_tol")]
    pub obj_tol: f64,
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
    pub gap_tol: Option<f64>,
    #[serde(default = "defaults::init")]
    pub init: InitName,
    #[serde(default = "defaults::eig")]
    pub eig: EigName,
    #[serde(default = "defaults::one")]
    pub gap_every: usize,

    // Run.
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub scene_dir: Option<PathBuf>,
}

mod defaults {
    use super::*;
    pub fn preset() -> PresetName {
        PresetName::ChikuseiLike
    }
    pub fn variant() -> VariantName {
        VariantName::Plain
    }
    pub fn rule_a() -> RuleName {
        RuleName::Fpg
    }
    pub fn rule_s() -> RuleName {
        RuleName::Fw
    }
    pub fn extrapolation() -> ExtrapolationName {
        ExtrapolationName::Fista
    }
    pub fn alpha_cap() -> f64 {
        0.9999
    }
    pub fn one() -> usize {
        1
    }
    pub fn obj_tol() -> f64 {
        1e-4
    }
    pub fn max_iter() -> usize {
        3000
    }
    pub fn init() -> InitName {
        InitName::DataDriven
    }
    pub fn eig() -> EigName {
        EigName::Power
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.variant == VariantName::Nnc && self.tau.is_none() {
            return Err(CliError::config(
                "NNC variant requires tau (shared value or per-material list)",
            ));
        }
        if !(0.0..1.0).contains(&self.alpha_cap) {
            return Err(CliError::config("alpha_cap must lie in [0, 1)"));
        }
        if self.extrapolation == ExtrapolationName::Constant && self.alpha.is_none() {
            return Err(CliError::config("constant extrapolation requires alpha"));
        }
        if self.obj_tol <= 0.0 {
            return Err(CliError::config("obj_tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(CliError::config("max_iter must be positive"));
        }
        if self.repeats_a == 0 || self.repeats_s == 0 {
            return Err(CliError::config("inner repeats must be >= 1"));
        }
        if let Some(t) = &self.tau {
            let bad = match t {
                TauSetting::Shared(v) => *v <= 0.0,
                TauSetting::PerMaterial(v) => v.is_empty() || v.iter().any(|&x| x <= 0.0),
            };
            if bad {
                return Err(CliError::config("tau radii must be positive"));
            }
        }
        Ok(())
    }

    /// Scene spec: the preset with per-field overrides applied.
    pub fn scene_spec(&self) -> CliResult<SceneSpec> {
        let base = match self.preset {
            PresetName::ChikuseiLike => ScenePreset::ChikuseiLike.spec(),
            PresetName::CupriteLike => ScenePreset::CupriteLike.spec(),
            PresetName::Custom => ScenePreset::ChikuseiLike.spec(),
        };
        let mut spec = base;
        if let Some(v) = self.bands {
            spec.m = v;
        }
        if let Some(v) = self.ms_bands {
            spec.m_m = v;
        }
        if let Some(v) = self.model_order {
            spec.n = v;
        }
        if let Some(v) = self.width {
            spec.l_x = v;
        }
        if let Some(v) = self.height {
            spec.l_y = v;
        }
        if let Some(v) = self.factor {
            spec.factor = v;
        }
        if let Some(v) = self.kernel_width {
            spec.kernel_width = v;
        }
        if let Some(v) = self.sigma {
            spec.sigma = v;
        }
        if let Some(v) = self.snr_db {
            spec.snr_m_db = v;
            spec.snr_h_db = v;
        }
        if let Some(v) = self.snr_m_db {
            spec.snr_m_db = v;
        }
        if let Some(v) = self.snr_h_db {
            spec.snr_h_db = v;
        }
        if let Some(v) = self.smoothness {
            spec.smoothness = v;
        }
        if spec.l_x % spec.factor != 0 || spec.l_y % spec.factor != 0 {
            return Err(CliError::config(format!(
                "scene dims {}x{} not divisible by factor {}",
                spec.l_x, spec.l_y, spec.factor
            )));
        }
        Ok(spec)
    }

    pub fn extrapolation_mode(&self) -> ExtrapolationMode {
        match self.extrapolation {
            ExtrapolationName::Fista => ExtrapolationMode::FistaAsWritten,
            ExtrapolationName::FistaSquared => ExtrapolationMode::FistaSquared,
            ExtrapolationName::Constant => ExtrapolationMode::Constant(self.alpha.unwrap_or(0.0)),
        }
    }

    /// Solver config for the configured rule pair.
    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            rule_a: self.rule_a.into(),
            rule_s: self.rule_s.into(),
            delta_a: self.delta_a,
            delta_s: self.delta_s,
            inner_repeats_a: self.repeats_a,
            inner_repeats_s: self.repeats_s,
            extrapolation: self.extrapolation_mode(),
            alpha_cap: self.alpha_cap,
            stop: StopRule {
                obj_tol: self.obj_tol,
                max_outer: self.max_iter,
                gap_tol: self.gap_tol,
            },
            init: match self.init {
                InitName::DataDriven => InitStrategy::DataDriven,
                InitName::Uniform => InitStrategy::Uniform,
            },
            eig: match self.eig {
                EigName::Power => StepEig::default(),
                EigName::Dense => StepEig::Dense,
            },
            gap_every: self.gap_every,
        }
    }
}

/// Parallelism cap from `HIBCD_THREADS` (defaults to 1).
pub fn thread_cap() -> usize {
    std::env::var("HIBCD_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(1)
}
