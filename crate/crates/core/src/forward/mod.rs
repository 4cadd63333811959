//! Forward maps `h(u)`: the scalar cubic model and steady single-phase Darcy
//! flow on the unit square observed through Gaussian-kernel functionals.

mod darcy;
mod observation;
mod sparse;

pub use darcy::{
    assemble_darcy_system, assemble_darcy_system_with, paper_source, solve_pressure, solve_pressure_with, DarcySystem,
    PermeabilityField, PressureField,
};
pub use observation::{
    default_locations, observe, synthesize_from_clean, synthesize_observations, DarcyModel, ObservationOperator,
    ObservationOperatorSpec,
};
pub use sparse::{conjugate_gradient, CgReport, CsrMatrix, CG_TOL};

use crate::error::{EndaError, Result};

/// `h(u) = 7/12 u³ − 7/2 u² + 8u`.
pub fn cubic_forward(u: f64) -> f64 {
    7.0 / 12.0 * u.powi(3) - 3.5 * u.powi(2) + 8.0 * u
}

/// Uniform `n x n` cell-centred grid on the unit square. Cell `(i, j)`, with
/// `i` along x, has linear index `j * n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridSpec {
    n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(EndaError::Config(format!("grid needs n >= 2, got {n}")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    pub fn center(&self, k: usize) -> [f64; 2] {
        let dx = self.dx();
        [((k % self.n) as f64 + 0.5) * dx, ((k / self.n) as f64 + 0.5) * dx]
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.cells()).map(|k| self.center(k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    #[test]
    fn cubic_examples() {
        assert_eq!(cubic_forward(0.0), 0.0);
        assert_abs_diff_eq!(cubic_forward(6.0), 48.0, epsilon = 1e-12);
        assert_abs_diff_eq!(cubic_forward(4.0), 40.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn cubic_is_monotone() {
        // h'(u) = 7/4 u² − 7u + 8 never vanishes, so u = 6 is the only solution of h(u) = 48.
        let grid: Vec<f64> = (-400..=400).map(|i| f64::from(i) * 0.05).collect();
        assert!(grid.windows(2).all(|w| cubic_forward(w[1]) > cubic_forward(w[0])));
        assert_abs_diff_eq!(cubic_forward(6.0), 48.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_layout() {
        let g = GridSpec::new(4).unwrap();
        assert_eq!(g.index(1, 2), 9);
        assert_eq!(g.center(9), [0.375, 0.625]);
        assert!(g.centers().iter().all(|c| c.iter().all(|v| *v > 0.0 && *v < 1.0)));
        assert!(GridSpec::new(1).is_err());
    }
}
