//! The single-document JSON run configuration.
//!
//! Unknown keys are rejected everywhere, so a typo in a config is a
//! config error rather than a silently ignored field.

use std::path::PathBuf;

use kropina::classify::CcTolerances;
use kropina::conic::FdConfig;
use kropina::navigation::NavSpec;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    CheckCc,
    Geodesic,
    Convert,
    Moduli,
    Hamel,
    Indicatrix,
}

impl CommandKind {
    pub fn parse_name(name: &str) -> Option<CommandKind> {
        match name {
            "check-cc" | "check_cc" => Some(CommandKind::CheckCc),
            "geodesic" => Some(CommandKind::Geodesic),
            "convert" => Some(CommandKind::Convert),
            "moduli" => Some(CommandKind::Moduli),
            "hamel" => Some(CommandKind::Hamel),
            "indicatrix" => Some(CommandKind::Indicatrix),
            _ => None,
        }
    }
}

fn default_seed() -> u64 {
    0
}

fn default_n_samples() -> usize {
    100
}

fn default_killing() -> f64 {
    1e-8
}

fn default_sectional() -> f64 {
    1e-4
}

fn default_flag_rel() -> f64 {
    1e-3
}

fn default_flag_abs_flat() -> f64 {
    1e-5
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default = "default_killing")]
    pub killing: f64,
    #[serde(default = "default_sectional")]
    pub sectional: f64,
    #[serde(default = "default_flag_rel")]
    pub flag_rel: f64,
    #[serde(default = "default_flag_abs_flat")]
    pub flag_abs_flat: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        ToleranceConfig {
            killing: default_killing(),
            sectional: default_sectional(),
            flag_rel: default_flag_rel(),
            flag_abs_flat: default_flag_abs_flat(),
        }
    }
}

impl ToleranceConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("killing", self.killing),
            ("sectional", self.sectional),
            ("flag_rel", self.flag_rel),
            ("flag_abs_flat", self.flag_abs_flat),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(format!("tolerance {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn cc(&self) -> CcTolerances {
        CcTolerances {
            killing: self.killing,
            sectional: self.sectional,
            flag_rel: self.flag_rel,
            flag_abs_flat: self.flag_abs_flat,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            seed: default_seed(),
            n_samples: default_n_samples(),
            tolerances: ToleranceConfig::default(),
        }
    }
}

/// Raw constant Kropina data `(a, b)` for conversions.
fn default_step_x() -> f64 {
    1e-4
}

fn default_step_y() -> f64 {
    1e-5
}

/// Finite-difference options for the curvature operators.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdSpec {
    #[serde(default = "default_step_x")]
    pub step_x: f64,
    #[serde(default = "default_step_y")]
    pub step_y: f64,
    #[serde(default)]
    pub richardson: bool,
}

impl Default for FdSpec {
    fn default() -> Self {
        FdSpec { step_x: default_step_x(), step_y: default_step_y(), richardson: false }
    }
}

impl FdSpec {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("step_x", self.step_x), ("step_y", self.step_y)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(format!("fd {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    pub fn build(&self) -> FdConfig {
        FdConfig { step_x: self.step_x, step_y: self.step_y, richardson: self.richardson }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KropinaSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    pub x0: Vec<f64>,
    pub y0: Vec<f64>,
    pub t_max: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndicatrixConfig {
    /// Base point; the chart origin when omitted.
    #[serde(default)]
    pub at: Option<Vec<f64>>,
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvertConfig {
    /// Evaluation point for chart-dependent data; the origin when omitted.
    #[serde(default)]
    pub at: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub report: Option<PathBuf>,
    #[serde(default)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(default)]
    pub model: Option<NavSpec>,
    #[serde(default)]
    pub kropina: Option<KropinaSpec>,
    #[serde(default)]
    pub expected_curvature: Option<f64>,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub integration: Option<IntegrationConfig>,
    #[serde(default)]
    pub indicatrix: Option<IndicatrixConfig>,
    #[serde(default)]
    pub convert: Option<ConvertConfig>,
    #[serde(default)]
    pub fd: FdSpec,
    #[serde(default)]
    pub output: OutputConfig,
}
