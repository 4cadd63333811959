use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use super::config::Method;
use crate::error::{EndaError, Result};

/// A list of reals stored in one CSV field, `;`-separated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JoinedF64(pub Vec<f64>);

impl JoinedF64 {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Serialize for JoinedF64 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let text: Vec<String> = self.0.iter().map(|v| format!("{v:?}")).collect();
        s.serialize_str(&text.join(";"))
    }
}

impl<'de> Deserialize<'de> for JoinedF64 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = JoinedF64;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("`;`-separated reals")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<JoinedF64, E> {
                if v.is_empty() {
                    return Ok(JoinedF64::default());
                }
                v.split(';')
                    .map(|t| t.trim().parse::<f64>().map_err(E::custom))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map(JoinedF64)
            }
        }
        d.deserialize_str(V)
    }
}

/// Metrics of one assimilation run, before and after the update.
///
/// `rmse_*` is the Euclidean error of the ensemble mean in reporting
/// coordinates: `u` for the cubic problem, `(a, b, c, log k1, log k2)` for
/// the layered field and the log-permeability grid for the Gaussian field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub method: Method,
    #[serde(rename = "M")]
    pub members: usize,
    pub replicate: usize,
    pub misfit_before: Option<f64>,
    pub misfit_after: Option<f64>,
    pub rmse_before: Option<f64>,
    pub rmse_after: Option<f64>,
    pub variance_after: Option<f64>,
    pub relative_error_before: Option<f64>,
    pub relative_error_after: Option<f64>,
    pub mode_sq_error_1: Option<f64>,
    pub mode_sq_error_2: Option<f64>,
    pub mode_sq_error_3: Option<f64>,
    /// Histogram KL divergence per reported parameter against the reference run.
    pub kl_divergences: JoinedF64,
    /// Analysis mean per reported parameter (low-dimensional problems only).
    pub analysis_mean: JoinedF64,
    pub analysis_std: JoinedF64,
    pub error: Option<String>,
}

impl ReplicateResult {
    pub fn empty(method: Method, members: usize, replicate: usize) -> Self {
        Self {
            method,
            members,
            replicate,
            misfit_before: None,
            misfit_after: None,
            rmse_before: None,
            rmse_after: None,
            variance_after: None,
            relative_error_before: None,
            relative_error_after: None,
            mode_sq_error_1: None,
            mode_sq_error_2: None,
            mode_sq_error_3: None,
            kl_divergences: JoinedF64::default(),
            analysis_mean: JoinedF64::default(),
            analysis_std: JoinedF64::default(),
            error: None,
        }
    }

    pub fn failed(method: Method, members: usize, replicate: usize, err: &EndaError) -> Self {
        Self {
            error: Some(err.to_string()),
            ..Self::empty(method, members, replicate)
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    pub fn misfit_delta(&self) -> Option<f64> {
        Some(self.misfit_after? - self.misfit_before?)
    }

    pub fn rmse_delta(&self) -> Option<f64> {
        Some(self.rmse_after? - self.rmse_before?)
    }
}

fn csv_err(path: &Path, e: csv::Error) -> EndaError {
    EndaError::Format(format!("{}: {e}", path.display()))
}

pub fn replicates_to_csv_string(rows: &[ReplicateResult]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| EndaError::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| EndaError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| EndaError::Format(e.to_string()))
}

pub fn write_replicates_csv(path: &Path, rows: &[ReplicateResult]) -> Result<()> {
    std::fs::write(path, replicates_to_csv_string(rows)?).map_err(|e| EndaError::io(path, e))
}

pub fn parse_replicates_csv(text: &str) -> Result<Vec<ReplicateResult>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| EndaError::Format(e.to_string()))
}

pub fn read_replicates_csv(path: &Path) -> Result<Vec<ReplicateResult>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| csv_err(path, e))
}
