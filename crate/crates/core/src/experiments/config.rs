use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{EndaError, Result};
use crate::forward::{default_locations, ObservationOperatorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    /// Scalar parameter observed through the cubic map.
    Cubic,
    /// Layered Darcy field with five parameters.
    FiveParam,
    /// Gaussian log-permeability field on the grid.
    KlField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "IS")]
    Is,
    #[serde(rename = "ETKF")]
    Etkf,
    #[serde(rename = "ETPF")]
    Etpf,
    #[serde(rename = "LETKF")]
    Letkf,
    #[serde(rename = "LETPF")]
    Letpf,
}

impl Method {
    pub fn is_localized(self) -> bool {
        matches!(self, Method::Letkf | Method::Letpf)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Is => "IS",
            Method::Etkf => "ETKF",
            Method::Etpf => "ETPF",
            Method::Letkf => "LETKF",
            Method::Letpf => "LETPF",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = EndaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IS" => Ok(Method::Is),
            "ETKF" => Ok(Method::Etkf),
            "ETPF" => Ok(Method::Etpf),
            "LETKF" => Ok(Method::Letkf),
            "LETPF" => Ok(Method::Letpf),
            _ => Err(EndaError::Config(format!("unknown method `{s}`"))),
        }
    }
}

/// Observation settings. Unset noise levels fall back to the problem default
/// (`0.09` for the Darcy problems, `4` for the cubic one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub likelihood_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locations: Option<Vec<[f64; 2]>>,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            sigma: default_sigma(),
            noise_std: None,
            likelihood_std: None,
            locations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubicConfig {
    #[serde(default = "default_cubic_prior_mean")]
    pub prior_mean: f64,
    #[serde(default = "default_one")]
    pub prior_std: f64,
    #[serde(default = "default_cubic_truth")]
    pub truth: f64,
}

impl Default for CubicConfig {
    fn default() -> Self {
        Self {
            prior_mean: default_cubic_prior_mean(),
            prior_std: 1.0,
            truth: default_cubic_truth(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlConfig {
    #[serde(default = "default_range")]
    pub correlation_range: f64,
    /// Snapshot file holding the eigendecomposition; created when missing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_cache: Option<PathBuf>,
}

impl Default for KlConfig {
    fn default() -> Self {
        Self {
            correlation_range: default_range(),
            basis_cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub method: Method,
    #[serde(default = "default_sizes")]
    pub ensemble_sizes: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization_radius: Option<f64>,
    pub output_dir: PathBuf,
    /// Importance-sampling archive used for histogram KL divergences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<PathBuf>,
    #[serde(default)]
    pub observation: ObservationConfig,
    #[serde(default)]
    pub cubic: CubicConfig,
    #[serde(default)]
    pub kl: KlConfig,
}

fn default_sigma() -> f64 {
    0.01
}
fn default_one() -> f64 {
    1.0
}
fn default_cubic_prior_mean() -> f64 {
    4.0
}
fn default_cubic_truth() -> f64 {
    6.0
}
fn default_range() -> f64 {
    0.5
}
fn default_sizes() -> Vec<usize> {
    (10..=1000).step_by(50).collect()
}
fn default_replicates() -> usize {
    10
}
fn default_grid_n() -> usize {
    50
}

impl ExperimentConfig {
    /// Minimal valid configuration; remaining fields take their defaults.
    pub fn new(problem: Problem, method: Method, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            problem,
            method,
            ensemble_sizes: default_sizes(),
            replicates: default_replicates(),
            seed,
            grid_n: default_grid_n(),
            truncation: None,
            localization_radius: None,
            output_dir: output_dir.into(),
            reference: None,
            observation: ObservationConfig::default(),
            cubic: CubicConfig::default(),
            kl: KlConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| EndaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EndaError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Relative paths in a config file are relative to the file.
        if let Some(dir) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            fix(&mut cfg.output_dir);
            if let Some(r) = cfg.reference.as_mut() {
                fix(r);
            }
            if let Some(c) = cfg.kl.basis_cache.as_mut() {
                fix(c);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| EndaError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(EndaError::Config(msg));
        if self.ensemble_sizes.is_empty() || self.ensemble_sizes.contains(&0) {
            return fail("ensemble_sizes must be a non-empty list of positive integers".into());
        }
        if self.replicates == 0 {
            return fail("replicates must be at least 1".into());
        }
        if self.seed > i64::MAX as u64 {
            return fail("seed must fit in a signed 64-bit integer".into());
        }
        if self.grid_n < 2 {
            return fail(format!("grid_n must be at least 2, got {}", self.grid_n));
        }
        match (self.method.is_localized(), self.localization_radius) {
            (true, None) => return fail(format!("{} needs localization_radius", self.method)),
            (false, Some(_)) => return fail(format!("localization_radius given for {}", self.method)),
            (true, Some(r)) if !(r.is_finite() && r > 0.0) => {
                return fail(format!("localization_radius must be positive, got {r}"))
            }
            _ => {}
        }
        if self.method.is_localized() && self.problem != Problem::KlField {
            return fail("localization applies only to grid-indexed parameters (kl-field)".into());
        }
        if let Some(t) = self.truncation {
            if self.problem != Problem::KlField {
                return fail("truncation is only meaningful for kl-field".into());
            }
            if t == 0 || t > self.grid_n * self.grid_n {
                return fail(format!("truncation {t} outside [1, grid_n²]"));
            }
        }
        if !(self.kl.correlation_range.is_finite() && self.kl.correlation_range > 0.0) {
            return fail("kl.correlation_range must be positive".into());
        }
        if !(self.cubic.prior_std.is_finite() && self.cubic.prior_std > 0.0) {
            return fail("cubic.prior_std must be positive".into());
        }
        self.observation_spec()?.validate()
    }

    /// Observation spec with problem-specific defaults filled in.
    pub fn observation_spec(&self) -> Result<ObservationOperatorSpec> {
        let o = &self.observation;
        let (default_noise, default_locations) = match self.problem {
            Problem::Cubic => (4.0, vec![[0.5, 0.5]]),
            _ => (0.09, default_locations()),
        };
        let locations = o.locations.clone().unwrap_or(default_locations);
        if self.problem == Problem::Cubic && locations.len() != 1 {
            return Err(EndaError::Config("the cubic problem has a single observation".into()));
        }
        Ok(ObservationOperatorSpec {
            sigma: o.sigma,
            locations,
            noise_std: o.noise_std.unwrap_or(default_noise),
            likelihood_std: o.likelihood_std,
        })
    }
}
