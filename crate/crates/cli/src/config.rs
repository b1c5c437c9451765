//! Scenario files: flat `section.key = value` lines (TOML dotted keys), e.g.
//!
//! ```text
//! model.kind = "spin_a"
//! model.omega = 0.1
//! model.theta = 0.7853981633974483
//! grid.tau_end = 200.0
//! grid.n_steps = 200000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Syntax(String),
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SpinA,
    SpinB,
    Hv,
    Constant,
    Linear,
    Tabulated,
}

/// Row-major d×d matrix; `im` defaults to zero.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h1: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// divide by |E_m(0)| and rescale time accordingly
    #[serde(default)]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_end: Option<f64>,
    pub n_steps: usize,
    /// τ_end as a multiple of the model period (exclusive with `tau_end`)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeChoice {
    #[default]
    Continuity,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaChoice {
    #[default]
    FiniteDifference,
    HellmannFeynman,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GammaSpec {
    #[serde(default)]
    pub method: GammaChoice,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub condition: f64,
    pub gap_tol: f64,
    pub linearity_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resonance_tol: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            condition: adiabat::perturb::DEFAULT_THRESHOLD,
            gap_tol: adiabat::spectrum::DEFAULT_GAP_TOL,
            linearity_tol: adiabat::fourier::DEFAULT_LINEARITY_TOL,
            resonance_tol: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Exact,
    Direct,
    First,
    Second,
    Ratio,
    Conditions,
    Fourier,
}

impl Output {
    pub const ALL: [Output; 7] =
        [Output::Exact, Output::Direct, Output::First, Output::Second, Output::Ratio, Output::Conditions, Output::Fourier];
}

fn all_outputs() -> Vec<Output> {
    Output::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FourierSpec {
    pub n_harmonics: usize,
    /// (k, m); defaults to (first level other than m, m)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<[usize; 2]>,
    /// overrides the model period
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

impl Default for FourierSpec {
    fn default() -> Self {
        Self { n_harmonics: 8, pair: None, period: None }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// write every n-th grid sample to the evolution CSV
    pub stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub model: ModelSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub initial_level: usize,
    #[serde(default)]
    pub gauge: GaugeChoice,
    #[serde(default)]
    pub gamma: GammaSpec,
    #[serde(default)]
    pub threshold: Thresholds,
    #[serde(default = "all_outputs")]
    pub outputs: Vec<Output>,
    #[serde(default)]
    pub fourier: FourierSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Numeric keys a sweep may vary.
pub const SWEEPABLE: [&str; 8] = [
    "model.omega0",
    "model.omega",
    "model.theta",
    "grid.tau_end",
    "grid.n_steps",
    "grid.periods",
    "threshold.condition",
    "threshold.gap_tol",
];

/// A parsed but not yet typed scenario; sweeps edit it before typing.
#[derive(Debug, Clone)]
pub struct RawConfig {
    table: toml::Table,
    /// directory relative paths in the file are resolved against
    base: PathBuf,
}

impl RawConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: PathBuf) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        Ok(Self { table, base })
    }

    /// Sets a numeric key from [`SWEEPABLE`]. Setting one of `grid.tau_end`
    /// and `grid.periods` drops the other.
    pub fn set_number(&mut self, key: &str, value: f64) -> Result<(), ConfigError> {
        if !SWEEPABLE.contains(&key) {
            return Err(ConfigError::Invalid(format!(
                "unknown sweep parameter '{key}' (expected one of {})",
                SWEEPABLE.join(", ")
            )));
        }
        let (section, leaf) = key.split_once('.').expect("sweepable keys are dotted");
        let entry = self.table.entry(section).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(section_table) = entry else {
            return Err(ConfigError::Invalid(format!("'{section}' is not a section")));
        };
        let item = if leaf == "n_steps" {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(ConfigError::Invalid(format!("grid.n_steps must be a whole number (got {value})")));
            }
            toml::Value::Integer(value as i64)
        } else {
            toml::Value::Float(value)
        };
        section_table.insert(leaf.to_string(), item);
        match key {
            "grid.tau_end" => {
                section_table.remove("periods");
            }
            "grid.periods" => {
                section_table.remove("tau_end");
            }
            _ => {}
        }
        Ok(())
    }

    pub fn typed(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut config: ScenarioConfig =
            toml::Value::Table(self.table.clone()).try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        if let Some(path) = &config.model.path {
            if path.is_relative() {
                config.model.path = Some(self.base.join(path));
            }
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig, ConfigError> {
        RawConfig::parse(text, PathBuf::new())?.typed()
    }

    #[test]
    fn minimal_spin_config_fills_defaults() {
        let c = parse("model.kind = \"spin_a\"\nmodel.omega = 0.1\nmodel.theta = 0.5\ngrid.tau_end = 10.0\ngrid.n_steps = 100\n")
            .unwrap();
        assert_eq!(c.model.kind, ModelKind::SpinA);
        assert_eq!(c.initial_level, 0);
        assert_eq!(c.gauge, GaugeChoice::Continuity);
        assert_eq!(c.threshold.condition, 1e-2);
        assert_eq!(c.outputs.len(), 7);
        assert_eq!(c.output.stride, 1);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let c = parse("# scenario\n\nmodel.kind = \"constant\" # trailing\nmodel.h.re = [1, 0, 0, 2]\ngrid.tau_end = 1\ngrid.n_steps = 4\n")
            .unwrap();
        assert_eq!(c.model.h.unwrap().re, vec![1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse("model.kind = \"spin_a\"\nmodel.omgea = 0.1\ngrid.tau_end = 1\ngrid.n_steps = 4\n").unwrap_err();
        assert!(err.to_string().contains("omgea"), "{err}");
    }

    #[test]
    fn unknown_model_kind_is_rejected() {
        assert!(parse("model.kind = \"spin_c\"\ngrid.tau_end = 1\ngrid.n_steps = 4\n").is_err());
    }

    #[test]
    fn syntax_error_is_reported() {
        assert!(matches!(RawConfig::parse("model.kind = ", PathBuf::new()), Err(ConfigError::Syntax(_))));
    }

    #[test]
    fn sweep_override_replaces_value_and_drops_alternative() {
        let mut raw = RawConfig::parse(
            "model.kind = \"spin_a\"\nmodel.omega = 0.1\nmodel.theta = 0.5\ngrid.periods = 2\ngrid.n_steps = 100\n",
            PathBuf::new(),
        )
        .unwrap();
        raw.set_number("model.omega", 0.05).unwrap();
        raw.set_number("grid.tau_end", 7.0).unwrap();
        raw.set_number("grid.n_steps", 300.0).unwrap();
        let c = raw.typed().unwrap();
        assert_eq!(c.model.omega, Some(0.05));
        assert_eq!(c.grid.tau_end, Some(7.0));
        assert_eq!(c.grid.periods, None);
        assert_eq!(c.grid.n_steps, 300);
        assert!(raw.set_number("grid.n_steps", 2.5).is_err());
        assert!(raw.set_number("model.colour", 1.0).is_err());
    }

    #[test]
    fn relative_model_path_follows_config_location() {
        let raw = RawConfig::parse(
            "model.kind = \"tabulated\"\nmodel.path = \"h.tab\"\ngrid.tau_end = 1\ngrid.n_steps = 4\n",
            PathBuf::from("/data/run"),
        )
        .unwrap();
        assert_eq!(raw.typed().unwrap().model.path, Some(PathBuf::from("/data/run/h.tab")));
    }
}
