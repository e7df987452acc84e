//! Run configuration: a TOML document whose dotted section paths
//! (`plant.omega_v`, `scenario.initial_state.p_sup`, ...) mirror the structs
//! below. Unknown keys are rejected and every invariant violation is
//! reported at once.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fbl::ControllerConfig;
use crate::plant::PlantParams;
use crate::sim::Scenario;

pub const NOMINAL_CONFIG: &str = include_str!("../config/nominal.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerChoice {
    Fbl,
    Baseline,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub output_path: PathBuf,
    pub controller_kind: ControllerChoice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub factors: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { factors: vec![0.9, 0.95, 1.0, 1.05, 1.1] }
    }
}

/// Linear brake-force to supply-pressure map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcePressureMap {
    /// bar per kN
    pub slope: f64,
    /// bar
    pub intercept: f64,
}

impl Default for ForcePressureMap {
    /// Least-squares line through (5 kN, 27 bar), (10, 59), (15, 91); the
    /// three points are collinear.
    fn default() -> Self {
        Self { slope: 6.4, intercept: -5.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("brake force must be positive, got {0} kN")]
pub struct NonPositiveForce(pub f64);

pub fn force_to_pressure(force_kn: f64, map: &ForcePressureMap) -> Result<f64, NonPositiveForce> {
    if !(force_kn > 0.0) {
        return Err(NonPositiveForce(force_kn));
    }
    Ok(map.slope * force_kn + map.intercept)
}

pub fn pressure_to_force(p_bar: f64, map: &ForcePressureMap) -> f64 {
    (p_bar - map.intercept) / map.slope
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub plant: PlantParams,
    pub controller: ControllerConfig,
    pub scenario: Scenario,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub force_map: ForcePressureMap,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            run: RunSection { output_path: PathBuf::from("out"), controller_kind: ControllerChoice::Fbl },
            plant: PlantParams::default(),
            controller: ControllerConfig::default(),
            scenario: Scenario::default(),
            sweep: SweepSection::default(),
            force_map: ForcePressureMap::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid configuration:\n{}", list(.0))]
    Validation(Vec<Violation>),
}

fn list(v: &[Violation]) -> String {
    v.iter().map(|x| format!("  {x}")).collect::<Vec<_>>().join("\n")
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Validation(v) => v,
            ConfigError::Parse { .. } => &[],
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        ConfigError::Parse { line, column, message: e.message().to_string() }
    })?;
    let violations = cfg.violations();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError::Validation(violations))
    }
}

impl RunConfig {
    pub fn nominal() -> Self {
        parse_config(NOMINAL_CONFIG).expect("shipped nominal config is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |prefix: &str, items: Vec<(&'static str, String)>| {
            out.extend(items.into_iter().map(|(k, m)| Violation { key: format!("{prefix}.{k}"), message: m }));
        };
        push("plant", self.plant.violations());
        push("controller", self.controller.violations());
        push("scenario", self.scenario.violations(&self.plant));
        let mut extra = Vec::new();
        if self.sweep.factors.is_empty() {
            extra.push(("factors", "must not be empty".to_string()));
        }
        if let Some(f) = self.sweep.factors.iter().find(|f| !(**f > 0.0)) {
            extra.push(("factors", format!("must all be > 0, found {f}")));
        }
        push("sweep", extra);
        if !(self.force_map.slope > 0.0) {
            push("force_map", vec![("slope", format!("must be > 0, got {}", self.force_map.slope))]);
        }
        if self.run.output_path.as_os_str().is_empty() {
            push("run", vec![("output_path", "must not be empty".to_string())]);
        }
        out
    }
}
