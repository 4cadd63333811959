//! Ensemble transform particle filter: deterministic resampling through an
//! optimal coupling of the importance weights with the uniform measure.

use crate::ensemble::{Ensemble, Weights};
use crate::error::{EndaError, Result};
use crate::transport::{cost_matrix, solve_ot_1d, solve_ot_exact, TransportPlan};

/// Tolerance of [`check_bounds_preserved`].
pub const BOUNDS_TOL: f64 = 1e-10;

/// Which exact transport solver computes the coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportBackend {
    /// Monotone rearrangement for scalar ensembles, network simplex otherwise.
    #[default]
    Auto,
    NetworkSimplex,
    /// Only valid for one-dimensional ensembles.
    Univariate,
}

impl TransportBackend {
    pub fn solve(self, e: &Ensemble, w: &[f64]) -> Result<TransportPlan> {
        match self {
            TransportBackend::Auto if e.dim() == 1 => solve_ot_1d(e.as_slice(), w),
            TransportBackend::Auto | TransportBackend::NetworkSimplex => solve_ot_exact(&cost_matrix(e), w),
            TransportBackend::Univariate => {
                if e.dim() != 1 {
                    return Err(EndaError::Precondition(format!(
                        "univariate transport on a {}-dimensional ensemble",
                        e.dim()
                    )));
                }
                solve_ot_1d(e.as_slice(), w)
            }
        }
    }
}

/// `u_j^a = M sum_m t_mj u_m` for a coupling with uniform column sums.
pub fn apply_plan(e: &Ensemble, plan: &TransportPlan) -> Result<Ensemble> {
    let members = e.member_count();
    if plan.size != members {
        return Err(EndaError::DimensionMismatch(format!(
            "plan of size {} for {members} members",
            plan.size
        )));
    }
    let dim = e.dim();
    let scale = members as f64;
    let mut data = vec![0.0; members * dim];
    for entry in &plan.entries {
        let src = e.member(entry.row);
        let dst = &mut data[entry.col * dim..(entry.col + 1) * dim];
        for (d, s) in dst.iter_mut().zip(src) {
            *d += scale * entry.mass * s;
        }
    }
    Ensemble::from_row_major(members, dim, data)
}

pub fn etpf_update(e: &Ensemble, w: &Weights, backend: TransportBackend) -> Result<Ensemble> {
    if e.member_count() < 2 {
        return Err(EndaError::Precondition("ETPF needs at least two members".into()));
    }
    if w.len() != e.member_count() {
        return Err(EndaError::DimensionMismatch(format!(
            "{} weights for {} members",
            w.len(),
            e.member_count()
        )));
    }
    let plan = backend.solve(e, w)?;
    apply_plan(e, &plan)
}

/// Per coordinate: does every member of `after` lie within the background range?
pub fn check_bounds_preserved(before: &Ensemble, after: &Ensemble) -> Result<Vec<bool>> {
    if before.dim() != after.dim() {
        return Err(EndaError::DimensionMismatch(format!(
            "ensembles of dimension {} and {}",
            before.dim(),
            after.dim()
        )));
    }
    Ok((0..before.dim())
        .map(|i| {
            let col = before.coordinate(i);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            after
                .members()
                .all(|row| row[i] >= lo - BOUNDS_TOL && row[i] <= hi + BOUNDS_TOL)
        })
        .collect())
}
