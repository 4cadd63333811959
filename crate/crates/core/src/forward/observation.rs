use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::darcy::{solve_pressure, PermeabilityField, PressureField};
use super::GridSpec;
use crate::ensemble::{NoiseCovariance, ObservationSet};
use crate::error::{EndaError, Result};

/// Interior `4 x 4` lattice `(i/5, j/5)`, `i, j = 1..=4`, ordered by row.
pub fn default_locations() -> Vec<[f64; 2]> {
    (1..=4)
        .flat_map(|j| (1..=4).map(move |i| [i as f64 / 5.0, j as f64 / 5.0]))
        .collect()
}

/// Gaussian-kernel pressure functionals and the noise model of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationOperatorSpec {
    pub sigma: f64,
    pub locations: Vec<[f64; 2]>,
    /// Standard deviation of the noise added to synthetic data.
    pub noise_std: f64,
    /// Standard deviation assumed by the likelihood; `noise_std` when unset.
    pub likelihood_std: Option<f64>,
}

impl Default for ObservationOperatorSpec {
    fn default() -> Self {
        Self {
            sigma: 0.01,
            locations: default_locations(),
            noise_std: 0.09,
            likelihood_std: None,
        }
    }
}

impl ObservationOperatorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(EndaError::Config(format!(
                "kernel width must be positive, got {}",
                self.sigma
            )));
        }
        if self.locations.is_empty() {
            return Err(EndaError::Config("at least one observation location is needed".into()));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(EndaError::Config(format!(
                "noise_std must be non-negative, got {}",
                self.noise_std
            )));
        }
        if self.effective_likelihood_std() <= 0.0 {
            return Err(EndaError::Config(
                "zero noise needs an explicit positive likelihood_std".into(),
            ));
        }
        Ok(())
    }

    pub fn effective_likelihood_std(&self) -> f64 {
        self.likelihood_std.unwrap_or(self.noise_std)
    }

    fn kernel(&self, x: [f64; 2], r: [f64; 2]) -> f64 {
        let d2 = (x[0] - r[0]).powi(2) + (x[1] - r[1]).powi(2);
        (-d2 / (2.0 * self.sigma * self.sigma)).exp() / (2.0 * PI * self.sigma * self.sigma)
    }
}

/// `L_l(P) = 1/(2πσ²) Σ_i exp(−|X_i − r_l|² / 2σ²) P_i dx²`, evaluated directly.
pub fn observe(p: &PressureField, g: &GridSpec, spec: &ObservationOperatorSpec) -> Result<Vec<f64>> {
    if p.values().len() != g.cells() {
        return Err(EndaError::DimensionMismatch(format!(
            "pressure of length {} on a grid of {} cells",
            p.values().len(),
            g.cells()
        )));
    }
    let area = g.dx() * g.dx();
    Ok(spec
        .locations
        .iter()
        .map(|r| {
            p.values()
                .iter()
                .enumerate()
                .map(|(k, pk)| spec.kernel(g.center(k), *r) * pk * area)
                .sum()
        })
        .collect())
}

/// The observation functionals as an `N_y x n²` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationOperator {
    pub matrix: DMatrix<f64>,
}

impl ObservationOperator {
    pub fn new(g: &GridSpec, spec: &ObservationOperatorSpec) -> Result<Self> {
        spec.validate()?;
        let area = g.dx() * g.dx();
        let matrix = DMatrix::from_fn(spec.locations.len(), g.cells(), |l, k| {
            spec.kernel(g.center(k), spec.locations[l]) * area
        });
        Ok(Self { matrix })
    }

    pub fn apply(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.matrix.ncols() {
            return Err(EndaError::DimensionMismatch(format!(
                "pressure of length {} for an operator on {} cells",
                p.len(),
                self.matrix.ncols()
            )));
        }
        Ok((&self.matrix * DVector::from_column_slice(p)).iter().copied().collect())
    }
}

/// Adds seeded iid Gaussian noise of standard deviation `spec.noise_std` to
/// noise-free data; `R = diag(likelihood_std²)`.
pub fn synthesize_from_clean(clean: &[f64], spec: &ObservationOperatorSpec, seed: u64) -> Result<ObservationSet> {
    spec.validate()?;
    if clean.len() != spec.locations.len() {
        return Err(EndaError::DimensionMismatch(format!(
            "{} data values for {} locations",
            clean.len(),
            spec.locations.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y_obs = clean
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + spec.noise_std * z
        })
        .collect();
    let var = spec.effective_likelihood_std().powi(2);
    ObservationSet::new(
        y_obs,
        NoiseCovariance::isotropic(clean.len(), var)?,
        spec.locations.clone(),
    )
}

pub fn synthesize_observations(
    truth_k: &PermeabilityField,
    g: &GridSpec,
    spec: &ObservationOperatorSpec,
    seed: u64,
) -> Result<ObservationSet> {
    let clean = observe(&solve_pressure(truth_k, g)?, g, spec)?;
    synthesize_from_clean(&clean, spec, seed)
}

/// Darcy forward map `k ↦ L(P(k))` with the observation matrix precomputed.
#[derive(Debug, Clone)]
pub struct DarcyModel {
    pub grid: GridSpec,
    pub operator: ObservationOperator,
}

impl DarcyModel {
    pub fn new(grid: GridSpec, spec: &ObservationOperatorSpec) -> Result<Self> {
        Ok(Self {
            operator: ObservationOperator::new(&grid, spec)?,
            grid,
        })
    }

    pub fn forward(&self, k: &PermeabilityField) -> Result<Vec<f64>> {
        self.operator.apply(solve_pressure(k, &self.grid)?.values())
    }

    pub fn forward_log(&self, log_k: &[f64]) -> Result<Vec<f64>> {
        self.forward(&PermeabilityField::from_log(log_k)?)
    }
}
