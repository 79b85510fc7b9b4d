//! Experiment configuration: one JSON document per run.
//!
//! Times in configs are macroscopic; the runner maps a macroscopic time t
//! to the microscopic chain clock t N / (p - q) and records both.

use serde::{Deserialize, Serialize};
use zrp_core::RateShape;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub rate: RateShape,
    #[serde(default)]
    pub n: Option<usize>,
    /// Sweep over segment sizes; mutually exclusive with `n`.
    #[serde(default)]
    pub n_sweep: Vec<usize>,
    #[serde(default)]
    pub k: Option<u64>,
    /// Macroscopic density; used to derive k = round(alpha N) when k is
    /// absent.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_p")]
    pub p: f64,
    /// Macroscopic time grid.
    #[serde(default)]
    pub times: Vec<f64>,
    /// Positions for profile experiments.
    #[serde(default)]
    pub positions: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default)]
    pub seed: u64,
    /// Total-variation estimator for `mix`: exact | mc-upper | mc-lower |
    /// mc-identity.
    #[serde(default)]
    pub tv_mode: Option<String>,
    /// Event threshold parameter of the lower-bound statistic.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Mixing levels to report.
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    /// Poisson-maximum experiment scale constant.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Flux tabulation overrides.
    #[serde(default)]
    pub alpha_max: Option<f64>,
    #[serde(default)]
    pub grid_points: Option<usize>,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_p() -> f64 {
    1.0
}

fn default_replicas() -> u64 {
    1000
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_thetas() -> Vec<f64> {
    vec![0.75, 0.25]
}

fn default_c() -> f64 {
    1.0
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Flux,
    Macro,
    Simulate,
    Couple,
    ExclusionCheck,
    Mix,
    Hydro,
    Fronts,
    Poisson,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config invalid: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.p > 0.5 && self.p <= 1.0) {
            return Err(ConfigError::Invalid(format!("p must be in (1/2, 1], got {}", self.p)));
        }
        let needs_lattice = !matches!(self.kind, ExperimentKind::Flux | ExperimentKind::Poisson | ExperimentKind::Macro);
        if needs_lattice && self.n.is_none() && self.n_sweep.is_empty() {
            return Err(ConfigError::Invalid("n (or n_sweep) is required".into()));
        }
        if self.n.is_some() && !self.n_sweep.is_empty() {
            return Err(ConfigError::Invalid("give either n or n_sweep, not both".into()));
        }
        let needs_times = matches!(
            self.kind,
            ExperimentKind::Simulate
                | ExperimentKind::Couple
                | ExperimentKind::Mix
                | ExperimentKind::Hydro
                | ExperimentKind::Fronts
                | ExperimentKind::Macro
        );
        if needs_times && self.times.is_empty() {
            return Err(ConfigError::Invalid("time grid must not be empty".into()));
        }
        if self.times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(ConfigError::Invalid("times must be finite and non-negative".into()));
        }
        if needs_lattice || matches!(self.kind, ExperimentKind::Macro) {
            if self.k.is_none() && self.alpha.is_none() {
                return Err(ConfigError::Invalid("either k or alpha is required".into()));
            }
        }
        for f in &self.formats {
            if !matches!(f.as_str(), "csv" | "json" | "svg") {
                return Err(ConfigError::Invalid(format!("unknown output format {f}")));
            }
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        match self.n {
            Some(n) => vec![n],
            None => self.n_sweep.clone(),
        }
    }

    pub fn particles_for(&self, n: usize) -> u64 {
        match (self.k, self.alpha) {
            (Some(k), _) => k,
            (None, Some(a)) => ((a * n as f64).round() as u64).max(1),
            (None, None) => n as u64,
        }
    }

    pub fn density_for(&self, n: usize) -> f64 {
        self.particles_for(n) as f64 / n as f64
    }
}
