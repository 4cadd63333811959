//! Exact discrete optimal transport between a weighted ensemble and the
//! uniform measure on the same members.
//!
//! [`solve_ot_exact`] runs a network simplex on the full bipartite graph;
//! [`solve_ot_1d`] solves the scalar squared-distance case by monotone
//! rearrangement. Plans are stored sparsely: an optimal vertex has at most
//! `2M - 1` non-zero entries.

mod network_simplex;

use nalgebra::DMatrix;

use crate::ensemble::Ensemble;
use crate::error::{EndaError, Result};

pub(crate) use network_simplex::solve_transportation;

/// Tolerance on plan marginals and non-negativity.
pub const PLAN_TOL: f64 = 1e-9;

/// Weights below this are treated as exactly zero before solving.
pub const WEIGHT_CLAMP: f64 = 1e-15;

/// Pairwise squared Euclidean distances between ensemble members.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(DMatrix<f64>);

impl CostMatrix {
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        if !c.is_square() {
            return Err(EndaError::DimensionMismatch(format!(
                "cost matrix must be square, got {:?}",
                c.shape()
            )));
        }
        Ok(Self(c))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    fn row_major(&self) -> Vec<f64> {
        let n = self.size();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            out.extend(self.0.row(i).iter().copied());
        }
        out
    }
}

pub fn cost_matrix(e: &Ensemble) -> CostMatrix {
    let m = e.member_count();
    let mut c = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let d: f64 = e
                .member(i)
                .iter()
                .zip(e.member(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            c[(i, j)] = d;
            c[(j, i)] = d;
        }
    }
    CostMatrix(c)
}

/// One non-zero entry `t[row, col] = mass` of a coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanEntry {
    pub row: usize,
    pub col: usize,
    pub mass: f64,
}

/// A coupling between the weighted ensemble (rows) and the uniform measure
/// (columns), with the transport cost it achieves.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub size: usize,
    pub entries: Vec<PlanEntry>,
    pub cost_value: f64,
}

impl TransportPlan {
    fn from_entries(size: usize, mut entries: Vec<PlanEntry>, cost_value: f64) -> Self {
        entries.sort_by_key(|e| (e.row, e.col));
        Self {
            size,
            entries,
            cost_value,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.size, self.size);
        for e in &self.entries {
            t[(e.row, e.col)] += e.mass;
        }
        t
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.size];
        for e in &self.entries {
            s[e.row] += e.mass;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.size];
        for e in &self.entries {
            s[e.col] += e.mass;
        }
        s
    }

    /// `sum t_mj c_mj` for an arbitrary cost.
    pub fn objective(&self, c: &CostMatrix) -> f64 {
        self.entries.iter().map(|e| e.mass * c.matrix()[(e.row, e.col)]).sum()
    }
}

/// Checks, clamps and renormalises row marginals.
fn prepare_marginals(w: &[f64], size: usize) -> Result<Vec<f64>> {
    if w.len() != size {
        return Err(EndaError::DimensionMismatch(format!(
            "{} row marginals for a problem of size {size}",
            w.len()
        )));
    }
    if size == 0 {
        return Err(EndaError::DimensionMismatch("empty transport problem".into()));
    }
    if let Some(v) = w.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(EndaError::Infeasible(format!("invalid row marginal {v}")));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > PLAN_TOL {
        return Err(EndaError::Infeasible(format!(
            "row marginals sum to {sum}, column marginals to 1"
        )));
    }
    let clamped: Vec<f64> = w.iter().map(|v| if *v < WEIGHT_CLAMP { 0.0 } else { *v }).collect();
    let total: f64 = clamped.iter().sum();
    Ok(clamped.into_iter().map(|v| v / total).collect())
}

/// Optimal coupling of the row marginals with the uniform column marginal
/// `1/M`, minimising `sum t_mj c_mj`.
pub fn solve_ot_exact(c: &CostMatrix, row_marginals: &[f64]) -> Result<TransportPlan> {
    let m = c.size();
    let supply = prepare_marginals(row_marginals, m)?;
    let demand = vec![1.0 / m as f64; m];
    let sol = solve_transportation(&c.row_major(), &supply, &demand)?;
    let entries = sol
        .entries
        .into_iter()
        .map(|(row, col, mass)| PlanEntry { row, col, mass })
        .collect();
    Ok(TransportPlan::from_entries(m, entries, sol.cost))
}

/// Optimal squared-distance coupling for scalar members by monotone
/// rearrangement: rows and columns are both visited in sorted order and mass
/// is swept from rows into columns of capacity `1/M`.
pub fn solve_ot_1d(values: &[f64], row_marginals: &[f64]) -> Result<TransportPlan> {
    let m = values.len();
    let w = prepare_marginals(row_marginals, m)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EndaError::Domain("non-finite value in univariate transport".into()));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));

    let cap = 1.0 / m as f64;
    let mut entries = Vec::with_capacity(2 * m);
    let (mut i, mut j) = (0usize, 0usize);
    let mut rem_row = w[order[0]];
    let mut rem_col = cap;
    loop {
        let x = rem_row.min(rem_col);
        if x > 0.0 {
            entries.push(PlanEntry {
                row: order[i],
                col: order[j],
                mass: x,
            });
        }
        rem_row -= x;
        rem_col -= x;
        let row_done = rem_row <= rem_col;
        if row_done && i + 1 < m {
            i += 1;
            rem_row = w[order[i]];
        } else if j + 1 < m {
            j += 1;
            rem_col = cap;
        } else if i + 1 < m {
            i += 1;
            rem_row = w[order[i]];
        } else {
            break;
        }
    }
    let cost = entries
        .iter()
        .map(|e| e.mass * (values[e.row] - values[e.col]).powi(2))
        .sum();
    Ok(TransportPlan::from_entries(m, entries, cost))
}

/// A violated coupling constraint.
#[derive(Debug, Clone, PartialEq)]
pub enum PlanViolation {
    Size { plan: usize, weights: usize },
    Negative { row: usize, col: usize, mass: f64 },
    ColumnSum { col: usize, sum: f64 },
    RowSum { row: usize, sum: f64, expected: f64 },
}

/// Lists every violated coupling constraint at tolerance [`PLAN_TOL`].
pub fn validate_plan(p: &TransportPlan, w: &[f64]) -> Vec<PlanViolation> {
    let mut out = Vec::new();
    if p.size != w.len() {
        out.push(PlanViolation::Size {
            plan: p.size,
            weights: w.len(),
        });
        return out;
    }
    for e in &p.entries {
        if e.mass < -PLAN_TOL || e.row >= p.size || e.col >= p.size {
            out.push(PlanViolation::Negative {
                row: e.row,
                col: e.col,
                mass: e.mass,
            });
        }
    }
    let target = 1.0 / p.size as f64;
    for (col, sum) in p.col_sums().into_iter().enumerate() {
        if (sum - target).abs() > PLAN_TOL {
            out.push(PlanViolation::ColumnSum { col, sum });
        }
    }
    for (row, sum) in p.row_sums().into_iter().enumerate() {
        if (sum - w[row]).abs() > PLAN_TOL {
            out.push(PlanViolation::RowSum {
                row,
                sum,
                expected: w[row],
            });
        }
    }
    out
}
