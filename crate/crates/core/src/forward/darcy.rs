//! Cell-centred five-point discretisation of `−∇·(k ∇P) = f` with
//! homogeneous Dirichlet conditions on the boundary of the unit square.
//!
//! Interior faces use the harmonic mean of the two cell permeabilities;
//! boundary faces sit half a cell from the unknown, giving `2 k / dx²`.

use std::f64::consts::PI;

use super::sparse::{conjugate_gradient, CsrMatrix, CG_TOL};
use super::GridSpec;
use crate::error::{EndaError, Result};

/// Cell permeabilities, indexed like [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct PermeabilityField(Vec<f64>);

impl PermeabilityField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(EndaError::Domain(format!(
                "permeability {v} at cell {k} is not positive"
            )));
        }
        Ok(Self(values))
    }

    pub fn constant(cells: usize, k: f64) -> Result<Self> {
        Self::new(vec![k; cells])
    }

    pub fn from_log(log_k: &[f64]) -> Result<Self> {
        Self::new(log_k.iter().map(|v| v.exp()).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureField(pub Vec<f64>);

impl PressureField {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DarcySystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
}

/// `f(x, y) = 2π² cos(πx) cos(πy)`.
pub fn paper_source(x: f64, y: f64) -> f64 {
    2.0 * PI * PI * (PI * x).cos() * (PI * y).cos()
}

pub fn assemble_darcy_system(k: &PermeabilityField, g: &GridSpec) -> Result<DarcySystem> {
    assemble_darcy_system_with(k, g, paper_source)
}

/// Assembly with an arbitrary source evaluated at cell centres.
pub fn assemble_darcy_system_with<F>(k: &PermeabilityField, g: &GridSpec, source: F) -> Result<DarcySystem>
where
    F: Fn(f64, f64) -> f64,
{
    let n = g.n();
    if k.len() != g.cells() {
        return Err(EndaError::DimensionMismatch(format!(
            "{} permeabilities for a {n}x{n} grid",
            k.len()
        )));
    }
    let kv = k.values();
    let h2 = g.dx() * g.dx();
    let face = |p: usize, q: usize| 2.0 * kv[p] * kv[q] / (kv[p] + kv[q]) / h2;
    let boundary = |p: usize| 2.0 * kv[p] / h2;

    let cells = g.cells();
    let mut row_ptr = Vec::with_capacity(cells + 1);
    let mut col_idx = Vec::with_capacity(5 * cells);
    let mut values = Vec::with_capacity(5 * cells);
    let mut rhs = Vec::with_capacity(cells);
    row_ptr.push(0);
    for j in 0..n {
        for i in 0..n {
            let p = g.index(i, j);
            let mut diag = 0.0;
            let mut push = |q: usize, t: f64| {
                col_idx.push(q);
                values.push(-t);
            };
            // Neighbours in increasing column order: south, west, (self), east, north.
            if j > 0 {
                let t = face(p, p - n);
                push(p - n, t);
                diag += t;
            } else {
                diag += boundary(p);
            }
            if i > 0 {
                let t = face(p, p - 1);
                push(p - 1, t);
                diag += t;
            } else {
                diag += boundary(p);
            }
            let self_pos = col_idx.len();
            col_idx.push(p);
            values.push(0.0);
            if i + 1 < n {
                let t = face(p, p + 1);
                col_idx.push(p + 1);
                values.push(-t);
                diag += t;
            } else {
                diag += boundary(p);
            }
            if j + 1 < n {
                let t = face(p, p + n);
                col_idx.push(p + n);
                values.push(-t);
                diag += t;
            } else {
                diag += boundary(p);
            }
            values[self_pos] = diag;
            row_ptr.push(col_idx.len());
            let [x, y] = g.center(p);
            rhs.push(source(x, y));
        }
    }
    Ok(DarcySystem {
        matrix: CsrMatrix {
            n: cells,
            row_ptr,
            col_idx,
            values,
        },
        rhs,
    })
}

pub fn solve_pressure(k: &PermeabilityField, g: &GridSpec) -> Result<PressureField> {
    solve_pressure_with(k, g, paper_source)
}

pub fn solve_pressure_with<F>(k: &PermeabilityField, g: &GridSpec, source: F) -> Result<PressureField>
where
    F: Fn(f64, f64) -> f64,
{
    let sys = assemble_darcy_system_with(k, g, source)?;
    let max_iter = 20 * g.cells() + 100;
    let (p, _) = conjugate_gradient(&sys.matrix, &sys.rhs, CG_TOL, max_iter)?;
    Ok(PressureField(p))
}
