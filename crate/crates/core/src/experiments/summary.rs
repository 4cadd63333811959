use std::path::Path;

use super::config::Method;
use super::results::ReplicateResult;
use crate::error::{EndaError, Result};
use crate::metrics::spread_error_ratio;

/// Minimum, mean and maximum of a metric over the successful replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Self { mean, min, max })
    }
}

/// Metrics summarised per `(method, M)`.
pub const SUMMARY_METRICS: [&str; 12] = [
    "misfit_before",
    "misfit_after",
    "misfit_delta",
    "rmse_before",
    "rmse_after",
    "rmse_delta",
    "variance_after",
    "relative_error_before",
    "relative_error_after",
    "mode_sq_error_1",
    "mode_sq_error_2",
    "mode_sq_error_3",
];

fn metric(r: &ReplicateResult, name: &str) -> Option<f64> {
    match name {
        "misfit_before" => r.misfit_before,
        "misfit_after" => r.misfit_after,
        "misfit_delta" => r.misfit_delta(),
        "rmse_before" => r.rmse_before,
        "rmse_after" => r.rmse_after,
        "rmse_delta" => r.rmse_delta(),
        "variance_after" => r.variance_after,
        "relative_error_before" => r.relative_error_before,
        "relative_error_after" => r.relative_error_after,
        "mode_sq_error_1" => r.mode_sq_error_1,
        "mode_sq_error_2" => r.mode_sq_error_2,
        "mode_sq_error_3" => r.mode_sq_error_3,
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub members: usize,
    pub replicates: usize,
    pub failures: usize,
    /// One entry per name in [`SUMMARY_METRICS`].
    pub stats: Vec<Option<Stat>>,
    /// Percentage of replicates whose RMSE grew through the update.
    pub pct_rmse_increase: Option<f64>,
    /// Percentage of replicates whose data misfit shrank through the update.
    pub pct_misfit_decrease: Option<f64>,
    /// Per-parameter spread-to-error ratio, when the truth is known.
    pub spread_error_ratio: Vec<f64>,
    /// Per-parameter mean KL divergence against the reference.
    pub mean_kl_divergence: Vec<f64>,
}

impl SummaryRow {
    pub fn stat(&self, name: &str) -> Option<Stat> {
        SUMMARY_METRICS
            .iter()
            .position(|m| *m == name)
            .and_then(|i| self.stats[i])
    }
}

fn percentage(flags: impl Iterator<Item = bool>) -> Option<f64> {
    let (mut hit, mut n) = (0usize, 0usize);
    for f in flags {
        n += 1;
        hit += f as usize;
    }
    (n > 0).then(|| 100.0 * hit as f64 / n as f64)
}

/// Per-parameter mean over rows of equally long lists.
fn mean_lists<'a>(lists: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let lists: Vec<&[f64]> = lists.filter(|l| !l.is_empty()).collect();
    let Some(first) = lists.first() else {
        return Vec::new();
    };
    if lists.iter().any(|l| l.len() != first.len()) {
        return Vec::new();
    }
    (0..first.len())
        .map(|i| lists.iter().map(|l| l[i]).sum::<f64>() / lists.len() as f64)
        .collect()
}

/// Aggregates replicate rows by `(method, M)` in order of first appearance.
/// `truth` (reporting coordinates) enables the spread-to-error ratio.
pub fn summarize(results: &[ReplicateResult], truth: Option<&[f64]>) -> Result<Vec<SummaryRow>> {
    if results.is_empty() {
        return Err(EndaError::Precondition("nothing to summarise".into()));
    }
    let mut keys: Vec<(Method, usize)> = Vec::new();
    for r in results {
        if !keys.contains(&(r.method, r.members)) {
            keys.push((r.method, r.members));
        }
    }
    Ok(keys
        .into_iter()
        .map(|(method, members)| {
            let group: Vec<&ReplicateResult> = results
                .iter()
                .filter(|r| r.method == method && r.members == members)
                .collect();
            let ok: Vec<&ReplicateResult> = group.iter().copied().filter(|r| r.is_ok()).collect();
            let stats = SUMMARY_METRICS
                .iter()
                .map(|name| Stat::of(&ok.iter().filter_map(|r| metric(r, name)).collect::<Vec<_>>()))
                .collect();
            let pct_rmse_increase = percentage(ok.iter().filter_map(|r| r.rmse_delta()).map(|d| d > 0.0));
            let pct_misfit_decrease = percentage(ok.iter().filter_map(|r| r.misfit_delta()).map(|d| d < 0.0));
            let grand_mean = mean_lists(ok.iter().map(|r| r.analysis_mean.0.as_slice()));
            let mean_std = mean_lists(ok.iter().map(|r| r.analysis_std.0.as_slice()));
            let spread_error_ratio = match truth {
                Some(t) if t.len() == grand_mean.len() && t.len() == mean_std.len() => (0..t.len())
                    .map(|i| spread_error_ratio(mean_std[i], grand_mean[i], t[i]))
                    .collect(),
                _ => Vec::new(),
            };
            SummaryRow {
                method,
                members,
                replicates: group.len(),
                failures: group.len() - ok.len(),
                stats,
                pct_rmse_increase,
                pct_misfit_decrease,
                spread_error_ratio,
                mean_kl_divergence: mean_lists(ok.iter().map(|r| r.kl_divergences.0.as_slice())),
            }
        })
        .collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn joined(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";")
}

pub fn summary_to_csv_string(rows: &[SummaryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["method", "M", "replicates", "failures"].map(String::from).to_vec();
    for m in SUMMARY_METRICS {
        for s in ["mean", "min", "max"] {
            header.push(format!("{m}_{s}"));
        }
    }
    header.extend(
        [
            "pct_rmse_increase",
            "pct_misfit_decrease",
            "spread_error_ratio",
            "mean_kl_divergence",
        ]
        .map(String::from),
    );
    let fmt = |e: csv::Error| EndaError::Format(e.to_string());
    w.write_record(&header).map_err(fmt)?;
    for r in rows {
        let mut rec = vec![
            r.method.to_string(),
            r.members.to_string(),
            r.replicates.to_string(),
            r.failures.to_string(),
        ];
        for s in &r.stats {
            rec.push(opt(s.map(|s| s.mean)));
            rec.push(opt(s.map(|s| s.min)));
            rec.push(opt(s.map(|s| s.max)));
        }
        rec.push(opt(r.pct_rmse_increase));
        rec.push(opt(r.pct_misfit_decrease));
        rec.push(joined(&r.spread_error_ratio));
        rec.push(joined(&r.mean_kl_divergence));
        w.write_record(&rec).map_err(fmt)?;
    }
    let bytes = w.into_inner().map_err(|e| EndaError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| EndaError::Format(e.to_string()))
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    std::fs::write(path, summary_to_csv_string(rows)?).map_err(|e| EndaError::io(path, e))
}
