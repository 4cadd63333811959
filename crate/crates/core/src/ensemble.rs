//! Ensemble containers, Gaussian likelihood weighting and importance-sampling
//! estimators shared by every filter in the crate.
//!
//! An [`Ensemble`] stores `M` parameter vectors of dimension `d` row-major by
//! member, so `member(m)` is a contiguous slice that can be handed straight to
//! a forward model. Observation-space quantities use `nalgebra` types.

use std::ops::Deref;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{EndaError, Result};

/// Absolute tolerance on the sum of a weight vector.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// `M` parameter vectors of dimension `d`, one member per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    data: Vec<f64>,
    members: usize,
    dim: usize,
}

impl Ensemble {
    pub fn from_row_major(members: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if members == 0 || dim == 0 {
            return Err(EndaError::DimensionMismatch(format!(
                "ensemble needs at least one member and one coordinate, got {members}x{dim}"
            )));
        }
        if data.len() != members * dim {
            return Err(EndaError::DimensionMismatch(format!(
                "expected {} values for a {members}x{dim} ensemble, got {}",
                members * dim,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(EndaError::Domain(format!(
                "non-finite ensemble entry at member {}, coordinate {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { data, members, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (m, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(EndaError::DimensionMismatch(format!(
                    "member {m} has {} coordinates, expected {dim}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), dim, data)
    }

    /// Builds an ensemble from an `M x d` matrix (rows are members).
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let (members, dim) = m.shape();
        let mut data = Vec::with_capacity(members * dim);
        for r in 0..members {
            data.extend(m.row(r).iter().copied());
        }
        Self::from_row_major(members, dim, data)
    }

    pub fn member_count(&self) -> usize {
        self.members
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn member(&self, m: usize) -> &[f64] {
        &self.data[m * self.dim..(m + 1) * self.dim]
    }

    pub fn get(&self, m: usize, i: usize) -> f64 {
        self.data[m * self.dim + i]
    }

    pub fn members(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Values of coordinate `i` across all members.
    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.members().map(|row| row[i]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// `M x d` copy of the members.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.members, self.dim, &self.data)
    }

    /// Parameter anomalies as a `d x M` matrix, column `m` = `u_m - mean`.
    pub fn anomalies(&self) -> DMatrix<f64> {
        let mean = ensemble_mean(self);
        DMatrix::from_fn(self.dim, self.members, |i, m| self.get(m, i) - mean[i])
    }

    /// Applies `f` to every member, producing a new ensemble of dimension `out_dim`.
    pub fn map_members<F>(&self, out_dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        let mut data = Vec::with_capacity(self.members * out_dim);
        for row in self.members() {
            let mapped = f(row);
            if mapped.len() != out_dim {
                return Err(EndaError::DimensionMismatch(format!(
                    "member map produced {} values, expected {out_dim}",
                    mapped.len()
                )));
            }
            data.extend(mapped);
        }
        Self::from_row_major(self.members, out_dim, data)
    }
}

/// Normalised, non-negative member weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    /// Validates and renormalises `values`. The raw sum must already be within
    /// `1e-9` of one; the stored vector then sums to one within [`WEIGHT_SUM_TOL`].
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(EndaError::DimensionMismatch("empty weight vector".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(EndaError::Domain(format!("invalid weight {v}")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(EndaError::Infeasible(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(values.into_iter().map(|v| v / sum).collect()))
    }

    pub fn uniform(members: usize) -> Self {
        Self(vec![1.0 / members as f64; members])
    }

    /// Normalises `exp(log_w)` with max-subtraction so that no finite input
    /// underflows to an all-zero vector.
    pub fn from_log_weights(log_w: &[f64]) -> Result<Self> {
        if log_w.is_empty() {
            return Err(EndaError::DimensionMismatch("empty weight vector".into()));
        }
        if log_w.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(EndaError::Domain("log-weights must be finite or -inf".into()));
        }
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(EndaError::Domain("all log-weights are -inf".into()));
        }
        let unnorm: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = unnorm.iter().sum();
        Ok(Self(unnorm.into_iter().map(|v| v / sum).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Weights {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Observation-error covariance `R`.
#[derive(Debug, Clone)]
pub enum NoiseCovariance {
    Diagonal(DVector<f64>),
    Full {
        cov: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
    },
}

impl NoiseCovariance {
    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(EndaError::InvalidCovariance("empty covariance".into()));
        }
        if let Some(v) = variances.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(EndaError::InvalidCovariance(format!(
                "diagonal variance {v} is not positive"
            )));
        }
        Ok(NoiseCovariance::Diagonal(DVector::from_vec(variances)))
    }

    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::diagonal(vec![variance; dim])
    }

    pub fn full(cov: DMatrix<f64>) -> Result<Self> {
        if !cov.is_square() || cov.nrows() == 0 {
            return Err(EndaError::InvalidCovariance(format!(
                "covariance must be square and non-empty, got {:?}",
                cov.shape()
            )));
        }
        let scale = cov.amax().max(1.0);
        if (&cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(EndaError::InvalidCovariance("covariance is not symmetric".into()));
        }
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| EndaError::InvalidCovariance("covariance is not positive definite".into()))?;
        Ok(NoiseCovariance::Full { cov, chol })
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseCovariance::Diagonal(v) => v.len(),
            NoiseCovariance::Full { cov, .. } => cov.nrows(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, NoiseCovariance::Diagonal(_))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            NoiseCovariance::Diagonal(v) => DMatrix::from_diagonal(v),
            NoiseCovariance::Full { cov, .. } => cov.clone(),
        }
    }

    /// `F v` where `F^T F = R^{-1}`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            NoiseCovariance::Diagonal(var) => v.zip_map(var, |x, s| x / s.sqrt()),
            NoiseCovariance::Full { chol, .. } => chol
                .l_dirty()
                .solve_lower_triangular(v)
                .expect("cholesky factor is non-singular"),
        }
    }

    /// Whitens every column of `a`.
    pub fn whiten_columns(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            NoiseCovariance::Diagonal(var) => {
                let mut out = a.clone();
                for (mut row, s) in out.row_iter_mut().zip(var.iter()) {
                    row /= s.sqrt();
                }
                out
            }
            NoiseCovariance::Full { chol, .. } => chol
                .l_dirty()
                .solve_lower_triangular(a)
                .expect("cholesky factor is non-singular"),
        }
    }

    /// `R^{-1} v`.
    pub fn precision_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            NoiseCovariance::Diagonal(var) => v.component_div(var),
            NoiseCovariance::Full { chol, .. } => chol.solve(v),
        }
    }

    /// `v^T R^{-1} v`.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        self.whiten(v).norm_squared()
    }
}

/// Observed values, their error covariance and their locations in the unit square.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    pub y_obs: DVector<f64>,
    pub noise: NoiseCovariance,
    pub locations: Vec<[f64; 2]>,
}

impl ObservationSet {
    pub fn new(y_obs: Vec<f64>, noise: NoiseCovariance, locations: Vec<[f64; 2]>) -> Result<Self> {
        if y_obs.len() != noise.dim() || y_obs.len() != locations.len() {
            return Err(EndaError::DimensionMismatch(format!(
                "{} observations, covariance of size {}, {} locations",
                y_obs.len(),
                noise.dim(),
                locations.len()
            )));
        }
        if let Some(p) = locations
            .iter()
            .find(|p| !(0.0..=1.0).contains(&p[0]) || !(0.0..=1.0).contains(&p[1]))
        {
            return Err(EndaError::Domain(format!(
                "observation location {p:?} outside the unit square"
            )));
        }
        if y_obs.iter().any(|v| !v.is_finite()) {
            return Err(EndaError::Domain("non-finite observation".into()));
        }
        Ok(Self {
            y_obs: DVector::from_vec(y_obs),
            noise,
            locations,
        })
    }

    pub fn len(&self) -> usize {
        self.y_obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_obs.is_empty()
    }
}

/// Forward-model predictions, row `m` = `h(u_m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedData {
    values: DMatrix<f64>,
}

impl PredictedData {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(EndaError::DimensionMismatch("empty predicted data".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EndaError::Domain("non-finite prediction".into()));
        }
        Ok(Self { values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let e = Ensemble::from_rows(rows)?;
        Self::new(e.to_matrix())
    }

    pub fn member_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn member(&self, m: usize) -> DVector<f64> {
        self.values.row(m).transpose()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.values.row_mean().transpose()
    }

    /// `sum_m w_m y_m`.
    pub fn weighted_mean(&self, w: &[f64]) -> Result<DVector<f64>> {
        if w.len() != self.member_count() {
            return Err(EndaError::DimensionMismatch(format!(
                "{} weights for {} predictions",
                w.len(),
                self.member_count()
            )));
        }
        let mut out = DVector::zeros(self.obs_dim());
        for (m, wm) in w.iter().enumerate() {
            out += self.values.row(m).transpose() * *wm;
        }
        Ok(out)
    }

    pub fn check_against(&self, obs: &ObservationSet) -> Result<()> {
        if self.obs_dim() != obs.len() {
            return Err(EndaError::DimensionMismatch(format!(
                "predictions have {} components, observations {}",
                self.obs_dim(),
                obs.len()
            )));
        }
        Ok(())
    }
}

pub fn ensemble_mean(e: &Ensemble) -> DVector<f64> {
    let mut mean = DVector::zeros(e.dim());
    for row in e.members() {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    mean / e.member_count() as f64
}

/// Predicted-data anomalies as an `N_y x M` matrix whose columns sum to zero.
pub fn predicted_anomalies(y: &PredictedData) -> Result<DMatrix<f64>> {
    if y.member_count() < 2 {
        return Err(EndaError::Precondition("anomalies need at least two members".into()));
    }
    let mean = y.mean();
    let mut a = y.values().transpose();
    for mut col in a.column_iter_mut() {
        col -= &mean;
    }
    Ok(a)
}

/// Squared misfits `(y_m - y_obs)^T R_loc^{-1} (y_m - y_obs)` per member, where
/// `R_loc^{-1} = C^{1/2} R^{-1} C^{1/2}` for an optional diagonal taper `C`.
pub fn squared_misfits(y: &PredictedData, obs: &ObservationSet, taper: Option<&[f64]>) -> Result<Vec<f64>> {
    y.check_against(obs)?;
    let sqrt_taper: Option<DVector<f64>> = match taper {
        Some(t) if t.len() != obs.len() => {
            return Err(EndaError::DimensionMismatch(format!(
                "taper of length {} for {} observations",
                t.len(),
                obs.len()
            )))
        }
        Some(t) => Some(DVector::from_iterator(t.len(), t.iter().map(|c| c.sqrt()))),
        None => None,
    };
    Ok((0..y.member_count())
        .map(|m| {
            let mut d = y.member(m) - &obs.y_obs;
            if let Some(s) = &sqrt_taper {
                d.component_mul_assign(s);
            }
            obs.noise.quad_form(&d)
        })
        .collect())
}

/// Weights from squared misfits, `w_m ∝ exp(-misfit_m / 2)`.
pub fn weights_from_misfits(misfits: &[f64]) -> Result<Weights> {
    let log_w: Vec<f64> = misfits.iter().map(|d| -0.5 * d).collect();
    Weights::from_log_weights(&log_w)
}

/// Gaussian likelihood weights of each member given the observations.
pub fn likelihood_weights(y: &PredictedData, obs: &ObservationSet) -> Result<Weights> {
    weights_from_misfits(&squared_misfits(y, obs, None)?)
}

/// Importance-sampling posterior mean `sum_m w_m u_m`.
pub fn is_posterior_mean(e: &Ensemble, w: &[f64]) -> Result<DVector<f64>> {
    if w.len() != e.member_count() {
        return Err(EndaError::DimensionMismatch(format!(
            "{} weights for {} members",
            w.len(),
            e.member_count()
        )));
    }
    let mut mean = DVector::zeros(e.dim());
    for (row, wm) in e.members().zip(w) {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += wm * v;
        }
    }
    Ok(mean)
}

pub fn effective_sample_size(w: &[f64]) -> f64 {
    1.0 / w.iter().map(|v| v * v).sum::<f64>()
}
