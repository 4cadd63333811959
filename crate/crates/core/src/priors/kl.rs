use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::ensemble::Ensemble;
use crate::error::{EndaError, Result};
use crate::forward::GridSpec;

pub const MEAN_LOG_K: f64 = 1.6094379124341003; // ln 5
pub const CORRELATION_RANGE: f64 = 0.5;
/// Modes with `λ_i <= MODE_FLOOR · λ_1` are not inverted.
pub const MODE_FLOOR: f64 = 1e-12;

/// `C_ij = exp(−3 |X_i − X_j| / v)` over the cell centres.
pub fn exp_covariance(g: &GridSpec, v: f64) -> Result<DMatrix<f64>> {
    if !(v.is_finite() && v > 0.0) {
        return Err(EndaError::Config(format!(
            "correlation range must be positive, got {v}"
        )));
    }
    let centers = g.centers();
    let n = centers.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = 1.0;
        for j in 0..i {
            let h = ((centers[i][0] - centers[j][0]).powi(2) + (centers[i][1] - centers[j][1]).powi(2)).sqrt();
            let val = (-3.0 * h / v).exp();
            c[(i, j)] = val;
            c[(j, i)] = val;
        }
    }
    Ok(c)
}

/// Eigenpairs of a field covariance, sorted by decreasing eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct KLBasis {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors as columns.
    pub eigenvectors: DMatrix<f64>,
    pub mean_log_k: f64,
    truncation: usize,
}

impl KLBasis {
    pub fn new(
        eigenvalues: DVector<f64>,
        eigenvectors: DMatrix<f64>,
        mean_log_k: f64,
        truncation: usize,
    ) -> Result<Self> {
        let n = eigenvalues.len();
        if eigenvectors.shape() != (n, n) {
            return Err(EndaError::DimensionMismatch(format!(
                "{n} eigenvalues with a {:?} eigenvector matrix",
                eigenvectors.shape()
            )));
        }
        let basis = Self {
            eigenvalues,
            eigenvectors,
            mean_log_k,
            truncation: n,
        };
        basis.with_truncation(truncation)
    }

    pub fn size(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn with_truncation(mut self, truncation: usize) -> Result<Self> {
        self.set_truncation(truncation)?;
        Ok(self)
    }

    pub fn set_truncation(&mut self, truncation: usize) -> Result<()> {
        if truncation == 0 || truncation > self.size() {
            return Err(EndaError::Config(format!(
                "truncation {truncation} outside [1, {}]",
                self.size()
            )));
        }
        self.truncation = truncation;
        Ok(())
    }
}

/// Full symmetric eigendecomposition with eigenvalues clamped at zero.
pub fn kl_basis(c: &DMatrix<f64>, mean_log_k: f64) -> Result<KLBasis> {
    if !c.is_square() || c.nrows() == 0 {
        return Err(EndaError::InvalidCovariance(format!(
            "covariance of shape {:?}",
            c.shape()
        )));
    }
    let scale = c.amax().max(1.0);
    if (c - c.transpose()).amax() > 1e-8 * scale {
        return Err(EndaError::InvalidCovariance("covariance is not symmetric".into()));
    }
    let eig = SymmetricEigen::new(c.clone());
    let mut order: Vec<usize> = (0..c.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = DVector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i].max(0.0)));
    let eigenvectors = eig.eigenvectors.select_columns(&order);
    let n = c.nrows();
    KLBasis::new(eigenvalues, eigenvectors, mean_log_k, n)
}

/// `mean + Σ_{i ≤ truncation} √λ_i ν_i Z_i`. `z` needs at least `truncation` entries.
pub fn kl_to_logperm(z: &[f64], basis: &KLBasis) -> Result<Vec<f64>> {
    let t = basis.truncation();
    if z.len() < t {
        return Err(EndaError::DimensionMismatch(format!(
            "{} modes for truncation {t}",
            z.len()
        )));
    }
    let mut field = vec![basis.mean_log_k; basis.size()];
    for (i, zi) in z.iter().take(t).enumerate() {
        let coef = basis.eigenvalues[i].sqrt() * zi;
        if coef == 0.0 {
            continue;
        }
        for (f, v) in field.iter_mut().zip(basis.eigenvectors.column(i).iter()) {
            *f += coef * v;
        }
    }
    Ok(field)
}

/// Modes of a log-permeability field and the norm of what they miss.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeProjection {
    /// One entry per eigenpair; zero beyond the truncation or below the floor.
    pub modes: Vec<f64>,
    pub residual: f64,
}

pub fn logperm_to_modes(field: &[f64], basis: &KLBasis) -> Result<ModeProjection> {
    let n = basis.size();
    if field.len() != n {
        return Err(EndaError::DimensionMismatch(format!(
            "field of length {} for a basis of size {n}",
            field.len()
        )));
    }
    let centred = DVector::from_iterator(n, field.iter().map(|v| v - basis.mean_log_k));
    let floor = MODE_FLOOR * basis.eigenvalues[0];
    let mut modes = vec![0.0; n];
    for (i, z) in modes.iter_mut().enumerate().take(basis.truncation()) {
        let lambda = basis.eigenvalues[i];
        if lambda > floor {
            *z = basis.eigenvectors.column(i).dot(&centred) / lambda.sqrt();
        }
    }
    let recon = kl_to_logperm(&modes, basis)?;
    let residual = field
        .iter()
        .zip(&recon)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(ModeProjection { modes, residual })
}

/// `M` iid standard normal mode vectors, one per member, of length `basis.size()`.
pub fn sample_grf_prior(basis: &KLBasis, seed: u64, members: usize) -> Result<Ensemble> {
    if members == 0 {
        return Err(EndaError::Precondition("prior needs at least one member".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..members * basis.size())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Ensemble::from_row_major(members, basis.size(), data)
}
