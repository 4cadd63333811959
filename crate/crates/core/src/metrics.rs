//! Evaluation metrics for twin experiments.

use nalgebra::DVector;

use crate::ensemble::{Ensemble, ObservationSet};
use crate::error::{EndaError, Result};

/// Default number of histogram bins for posterior comparisons.
pub const KL_BINS: usize = 20;
/// Candidate densities below this are floored inside the KL sum.
pub const DENSITY_FLOOR: f64 = 1e-12;

fn same_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(EndaError::DimensionMismatch(format!("{what}: lengths {a} and {b}")));
    }
    Ok(())
}

/// `√Σ (mean_i − truth_i)²`, not divided by the number of cells.
pub fn rmse_logperm(mean_field: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(mean_field.len(), truth.len(), "rmse")?;
    Ok(mean_field
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// `1/(M−1) Σ_m ‖field_m − mean‖²`.
pub fn ensemble_variance_logperm(fields: &Ensemble, mean_field: &[f64]) -> Result<f64> {
    same_len(fields.dim(), mean_field.len(), "variance")?;
    let m = fields.member_count();
    if m < 2 {
        return Err(EndaError::Precondition("variance needs at least two members".into()));
    }
    let total: f64 = fields
        .members()
        .map(|row| row.iter().zip(mean_field).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    Ok(total / (m - 1) as f64)
}

/// `(ȳ − y_obs)ᵀ R⁻¹ (ȳ − y_obs)`.
pub fn data_misfit(y_mean: &DVector<f64>, obs: &ObservationSet) -> Result<f64> {
    same_len(y_mean.len(), obs.len(), "misfit")?;
    Ok(obs.noise.quad_form(&(y_mean - &obs.y_obs)))
}

/// Mean of `|ū_i − u_i| / |u_i|` over the coordinates.
pub fn relative_error(analysis_mean: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(analysis_mean.len(), truth.len(), "relative error")?;
    if truth.is_empty() {
        return Err(EndaError::Precondition("relative error of an empty vector".into()));
    }
    let mut acc = 0.0;
    for (a, t) in analysis_mean.iter().zip(truth) {
        if *t == 0.0 {
            return Err(EndaError::Domain("relative error against a zero truth entry".into()));
        }
        acc += (a - t).abs() / t.abs();
    }
    Ok(acc / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpreadStats {
    /// Mean over replicates of the replicate ensemble means.
    pub grand_mean: Vec<f64>,
    /// Mean over replicates of the per-replicate sample standard deviations.
    pub mean_std: Vec<f64>,
}

/// Per-replicate means and standard deviations (`M − 1` denominator), averaged.
pub fn spread_stats(replicates: &[Ensemble]) -> Result<SpreadStats> {
    let first = replicates
        .first()
        .ok_or_else(|| EndaError::Precondition("spread statistics need a replicate".into()))?;
    let d = first.dim();
    let mut grand_mean = vec![0.0; d];
    let mut mean_std = vec![0.0; d];
    for e in replicates {
        same_len(e.dim(), d, "replicate dimension")?;
        let m = e.member_count();
        if m < 2 {
            return Err(EndaError::Precondition("spread needs at least two members".into()));
        }
        for i in 0..d {
            let col = e.coordinate(i);
            let mean = col.iter().sum::<f64>() / m as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            grand_mean[i] += mean;
            mean_std[i] += var.sqrt();
        }
    }
    let r = replicates.len() as f64;
    grand_mean.iter_mut().for_each(|v| *v /= r);
    mean_std.iter_mut().for_each(|v| *v /= r);
    Ok(SpreadStats { grand_mean, mean_std })
}

/// `mean_std / |grand_mean − truth|`; `+∞` when the error vanishes.
pub fn spread_error_ratio(mean_std: f64, grand_mean: f64, truth: f64) -> f64 {
    let err = (grand_mean - truth).abs();
    if err == 0.0 {
        f64::INFINITY
    } else {
        mean_std / err
    }
}

/// Equal-width histogram normalised as a density.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.density.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.edges[i + 1] - self.edges[i]
    }
}

fn resolve_weights(samples: &[f64], weights: Option<&[f64]>) -> Result<Vec<f64>> {
    match weights {
        Some(w) => {
            same_len(samples.len(), w.len(), "histogram weights")?;
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(EndaError::Domain("histogram weights must be non-negative".into()));
            }
            Ok(w.to_vec())
        }
        None => Ok(vec![1.0; samples.len()]),
    }
}

/// Weighted histogram on `[lo, hi]` with `bins` equal bins; samples outside
/// the range are dropped, `hi` itself falls in the last bin.
pub fn weighted_histogram(
    samples: &[f64],
    weights: Option<&[f64]>,
    lo: f64,
    hi: f64,
    bins: usize,
) -> Result<Histogram> {
    if bins == 0 || !lo.is_finite() || !hi.is_finite() || hi <= lo {
        return Err(EndaError::Domain(format!(
            "degenerate histogram range [{lo}, {hi}] with {bins} bins"
        )));
    }
    let w = resolve_weights(samples, weights)?;
    let width = (hi - lo) / bins as f64;
    let mut mass = vec![0.0; bins];
    for (x, wx) in samples.iter().zip(&w) {
        if !(*x >= lo && *x <= hi) {
            continue;
        }
        let b = (((x - lo) / width) as usize).min(bins - 1);
        mass[b] += wx;
    }
    let total: f64 = mass.iter().sum();
    if total <= 0.0 {
        return Err(EndaError::Domain("histogram has no mass in range".into()));
    }
    let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let density = mass.iter().map(|m| m / (total * width)).collect();
    Ok(Histogram { edges, density })
}

/// `Σ π_ref log(π_ref / π) Δu` over a shared binning, skipping empty
/// reference bins and flooring the candidate density.
pub fn kl_divergence_densities(reference: &[f64], candidate: &[f64], widths: &[f64]) -> Result<f64> {
    same_len(reference.len(), candidate.len(), "densities")?;
    same_len(reference.len(), widths.len(), "bin widths")?;
    Ok(reference
        .iter()
        .zip(candidate)
        .zip(widths)
        .filter(|((r, _), _)| **r > 0.0)
        .map(|((r, c), w)| r * (r / c.max(DENSITY_FLOOR)).ln() * w)
        .sum())
}

/// Histogram KL divergence of a candidate sample set from a reference, on
/// `bins` equal bins spanning the union of both sample ranges.
pub fn kl_divergence_hist(
    reference: &[f64],
    reference_weights: Option<&[f64]>,
    candidate: &[f64],
    candidate_weights: Option<&[f64]>,
    bins: usize,
) -> Result<f64> {
    if reference.len() < 2 || candidate.len() < 2 {
        return Err(EndaError::Precondition(
            "KL divergence needs at least two samples each".into(),
        ));
    }
    let (lo, hi) = reference
        .iter()
        .chain(candidate)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(*x), hi.max(*x))
        });
    let href = weighted_histogram(reference, reference_weights, lo, hi, bins)?;
    let hcand = weighted_histogram(candidate, candidate_weights, lo, hi, bins)?;
    let widths: Vec<f64> = (0..bins).map(|i| href.width(i)).collect();
    kl_divergence_densities(&href.density, &hcand.density, &widths)
}
