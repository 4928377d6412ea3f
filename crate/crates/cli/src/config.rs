//! Strict JSON configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use selfnorm::processes::calibration::DEFAULT_CALIBRATION_STEPS;
use selfnorm::{BandwidthRule, CouplingMode, ExperimentPlan, ProcessSpec, RuleVariant};

pub const SCHEMA_VERSION: u32 = 1;

/// Invalid configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Worker threads, 0 = automatic.
    #[serde(default)]
    pub threads: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<ExperimentPlan>,
    /// Rules compared by `rates`; defaults to the plan's own rule.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<RuleVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_table: Option<BiasTableConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depmeasure: Option<DepmeasureConfig>,
    #[serde(default)]
    pub calibration: CalibrationConfig,
}

/// Exact `√n |σ² − σ_b²|` table, no simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasTableConfig {
    pub process: ProcessSpec,
    pub rules: Vec<BandwidthRule>,
    pub n_grid: Vec<usize>,
}

fn default_modes() -> Vec<CouplingMode> {
    vec![CouplingMode::SingleSwap, CouplingMode::TailSwap]
}

fn default_p() -> f64 {
    2.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepmeasureConfig {
    pub process: ProcessSpec,
    pub lags: Vec<usize>,
    #[serde(default = "default_p")]
    pub p: f64,
    pub reps: usize,
    #[serde(default = "default_modes")]
    pub modes: Vec<CouplingMode>,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_steps() -> usize {
    DEFAULT_CALIBRATION_STEPS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Cache file; defaults to `calibration.json` in the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            steps: DEFAULT_CALIBRATION_STEPS,
            cache: None,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Config> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> anyhow::Result<Config> {
        let config: Config = serde_json::from_str(text).map_err(|e| {
            config_error(format!("invalid config at line {} column {}: {e}", e.line(), e.column()))
        })?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(config_error(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                config.schema_version
            )));
        }
        if config.calibration.steps < 1000 {
            return Err(config_error("calibration.steps must be >= 1000"));
        }
        Ok(config)
    }
}
