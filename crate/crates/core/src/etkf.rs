//! Ensemble transform Kalman filter analysis in ensemble space.
//!
//! The analysis mean is `ū + U w` with
//! `w = S² Aᵀ R⁻¹ (y_obs − ȳ) / (M − 1)` and the analysis anomalies are `U S`,
//! where `S = [I + Aᵀ R⁻¹ A / (M − 1)]^{-1/2}` is the symmetric inverse square
//! root. `Aᵀ R⁻¹ A` has rank at most `N_y`, so when the observation space is
//! smaller than the ensemble the transform is kept in low-rank form
//! `S = I + V (D − I) Vᵀ` and never materialised as an `M x M` matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::ensemble::{ensemble_mean, Ensemble, ObservationSet};
use crate::error::{EndaError, Result};

/// Relative eigenvalue floor used when inverting symmetric matrices.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Symmetric inverse square root `V diag(λ^{-1/2}) Vᵀ` of an SPD matrix.
pub fn inverse_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(spd_powers(m)?.0)
}

/// Returns `(m^{-1/2}, m^{-1})` from one eigendecomposition.
fn spd_powers(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(EndaError::DimensionMismatch(format!(
            "expected a non-empty square matrix, got {:?}",
            m.shape()
        )));
    }
    if (m - m.transpose()).amax() > 1e-10 * m.amax().max(1.0) {
        return Err(EndaError::Precondition("matrix is not symmetric".into()));
    }
    let eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if lmax <= 0.0 || lmin <= EIGEN_FLOOR * lmax {
        return Err(EndaError::NumericalRank(format!(
            "eigenvalues in [{lmin:e}, {lmax:e}] are not safely positive"
        )));
    }
    let v = &eig.eigenvectors;
    let scaled = |f: &dyn Fn(f64) -> f64| {
        let mut vs = v.clone();
        for (mut col, l) in vs.column_iter_mut().zip(eig.eigenvalues.iter()) {
            col *= f(*l);
        }
        let out = &vs * v.transpose();
        // symmetrise away rounding
        (&out + out.transpose()) * 0.5
    };
    Ok((scaled(&|l| l.powf(-0.5)), scaled(&|l| 1.0 / l)))
}

/// The `M x M` square-root transform `S`.
#[derive(Debug, Clone)]
pub enum SqrtTransform {
    Dense(DMatrix<f64>),
    /// `S = I + basis diag(scale − 1) basisᵀ` with orthonormal `basis` columns.
    LowRank {
        basis: DMatrix<f64>,
        scale: DVector<f64>,
    },
}

impl SqrtTransform {
    pub fn identity(members: usize) -> Self {
        SqrtTransform::LowRank {
            basis: DMatrix::zeros(members, 0),
            scale: DVector::zeros(0),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            SqrtTransform::Dense(s) => s.nrows(),
            SqrtTransform::LowRank { basis, .. } => basis.nrows(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SqrtTransform::Dense(s) => s.clone(),
            SqrtTransform::LowRank { basis, scale } => {
                let mut s = DMatrix::identity(basis.nrows(), basis.nrows());
                let mut scaled = basis.clone();
                for (mut col, d) in scaled.column_iter_mut().zip(scale.iter()) {
                    col *= d - 1.0;
                }
                s += &scaled * basis.transpose();
                s
            }
        }
    }

    /// `x S` for a `k x M` matrix `x`.
    pub fn right_apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SqrtTransform::Dense(s) => x * s,
            SqrtTransform::LowRank { basis, scale } => {
                let mut xv = x * basis;
                for (mut col, d) in xv.column_iter_mut().zip(scale.iter()) {
                    col *= d - 1.0;
                }
                x + xv * basis.transpose()
            }
        }
    }
}

/// Output of the ETKF analysis in ensemble space.
#[derive(Debug, Clone)]
pub struct EtkfTransform {
    pub sqrt: SqrtTransform,
    pub w_mean: DVector<f64>,
}

impl EtkfTransform {
    pub fn identity(members: usize) -> Self {
        Self {
            sqrt: SqrtTransform::identity(members),
            w_mean: DVector::zeros(members),
        }
    }

    pub fn member_count(&self) -> usize {
        self.w_mean.len()
    }

    /// Dense `S`.
    pub fn s(&self) -> DMatrix<f64> {
        self.sqrt.to_dense()
    }
}

/// Forces the dense or low-rank evaluation of `S`; `Auto` picks low-rank when
/// `N_y < M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransformRoute {
    #[default]
    Auto,
    Dense,
    LowRank,
}

pub(crate) fn check_centered(a: &DMatrix<f64>) -> Result<()> {
    let scale = a.amax().max(1.0) * a.ncols() as f64;
    for (l, row) in a.row_iter().enumerate() {
        if row.sum().abs() > 1e-8 * scale {
            return Err(EndaError::Precondition(format!(
                "anomaly row {l} is not centred (sum {:e})",
                row.sum()
            )));
        }
    }
    Ok(())
}

/// Computes `S` and the mean-update weights from predicted anomalies `a`
/// (`N_y x M`), the observations and the predicted-data mean.
pub fn etkf_transform(a: &DMatrix<f64>, obs: &ObservationSet, y_mean: &DVector<f64>) -> Result<EtkfTransform> {
    etkf_transform_with(a, obs, y_mean, None, TransformRoute::Auto)
}

/// As [`etkf_transform`], with an optional diagonal observation taper
/// (entries in `[0, 1]`) and an explicit evaluation route.
pub fn etkf_transform_with(
    a: &DMatrix<f64>,
    obs: &ObservationSet,
    y_mean: &DVector<f64>,
    taper: Option<&[f64]>,
    route: TransformRoute,
) -> Result<EtkfTransform> {
    let (ny, members) = a.shape();
    if members < 2 {
        return Err(EndaError::Precondition("ETKF needs at least two members".into()));
    }
    if ny != obs.len() || y_mean.len() != ny {
        return Err(EndaError::DimensionMismatch(format!(
            "anomalies have {ny} rows, observations {}, mean {}",
            obs.len(),
            y_mean.len()
        )));
    }
    check_centered(a)?;

    let mut tapered = a.clone();
    let mut innovation = &obs.y_obs - y_mean;
    if let Some(t) = taper {
        if t.len() != ny {
            return Err(EndaError::DimensionMismatch(format!(
                "taper of length {} for {ny} observations",
                t.len()
            )));
        }
        for (l, c) in t.iter().enumerate() {
            let s = c.sqrt();
            tapered.row_mut(l).scale_mut(s);
            innovation[l] *= s;
        }
    }
    // B = (F A)ᵀ / √(M−1) with Fᵀ F = R⁻¹, so Bᵀ-free products give AᵀR⁻¹A/(M−1).
    let norm = ((members - 1) as f64).sqrt();
    let fa = obs.noise.whiten_columns(&tapered);
    let b = fa.transpose() / norm;
    // Aᵀ R⁻¹ (y_obs − ȳ) / (M−1)
    let rhs = &b * obs.noise.whiten(&innovation) / norm;

    let low_rank = match route {
        TransformRoute::Auto => ny < members,
        TransformRoute::Dense => false,
        TransformRoute::LowRank => true,
    };

    if low_rank {
        // Left singular pairs of B from the eigenpairs of the smaller Gram
        // matrix; nalgebra's SVD can lose accuracy on wide inputs.
        let (lambdas_all, vectors) = if ny < members {
            let eig = SymmetricEigen::new(b.transpose() * &b);
            let u = &b * &eig.eigenvectors;
            (eig.eigenvalues, u)
        } else {
            let eig = SymmetricEigen::new(&b * b.transpose());
            (eig.eigenvalues, eig.eigenvectors)
        };
        let lambda_max = lambdas_all.max();
        let keep: Vec<usize> = (0..lambdas_all.len())
            .filter(|&i| lambdas_all[i] > 1e-12 * lambda_max.max(1.0))
            .collect();
        let mut basis = vectors.select_columns(&keep);
        for mut col in basis.column_iter_mut() {
            let n = col.norm();
            col /= n;
        }
        let lambdas: Vec<f64> = keep.iter().map(|&i| lambdas_all[i]).collect();
        let scale = DVector::from_iterator(keep.len(), lambdas.iter().map(|l| (1.0 + l).powf(-0.5)));
        // S² = I + V (diag(1/(1+λ)) − I) Vᵀ
        let proj = basis.transpose() * &rhs;
        let mut w_mean = rhs.clone();
        for (k, l) in lambdas.iter().enumerate() {
            let coef = proj[k] * (1.0 / (1.0 + l) - 1.0);
            w_mean.axpy(coef, &basis.column(k), 1.0);
        }
        Ok(EtkfTransform {
            sqrt: SqrtTransform::LowRank { basis, scale },
            w_mean,
        })
    } else {
        let p = DMatrix::identity(members, members) + &b * b.transpose();
        let (s, p_inv) = spd_powers(&p)?;
        let w_mean = p_inv * rhs;
        Ok(EtkfTransform {
            sqrt: SqrtTransform::Dense(s),
            w_mean,
        })
    }
}

/// Applies an ETKF transform to the background ensemble.
pub fn etkf_update(e: &Ensemble, t: &EtkfTransform) -> Result<Ensemble> {
    let members = e.member_count();
    if t.member_count() != members || t.sqrt.size() != members {
        return Err(EndaError::DimensionMismatch(format!(
            "transform for {} members applied to {members}",
            t.member_count()
        )));
    }
    let mean = ensemble_mean(e);
    let u = e.anomalies();
    let shift = &mean + &u * &t.w_mean;
    let ua = t.sqrt.right_apply(&u);
    let dim = e.dim();
    let mut data = Vec::with_capacity(members * dim);
    for m in 0..members {
        data.extend((0..dim).map(|i| shift[i] + ua[(i, m)]));
    }
    Ensemble::from_row_major(members, dim, data)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::ensemble::{predicted_anomalies, NoiseCovariance, PredictedData};

    fn scalar_obs(y: f64, var: f64) -> ObservationSet {
        ObservationSet::new(vec![y], NoiseCovariance::diagonal(vec![var]).unwrap(), vec![[0.5, 0.5]]).unwrap()
    }

    #[test]
    fn inverse_sqrt_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_abs_diff_eq!(inverse_sqrt_spd(&id).unwrap(), id, epsilon = 1e-14);

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0 / 3.0]));
        assert_abs_diff_eq!(inverse_sqrt_spd(&d).unwrap(), expected, epsilon = 1e-14);

        // eigenvalues 1 on (1,1)/√2 and 2 on (1,-1)/√2
        let m = DMatrix::from_row_slice(2, 2, &[1.5, -0.5, -0.5, 1.5]);
        let s = inverse_sqrt_spd(&m).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
        let e2 = DVector::from_vec(vec![1.0, -1.0]) / 2f64.sqrt();
        assert_abs_diff_eq!(&s * &e1, e1.clone(), epsilon = 1e-14);
        assert_abs_diff_eq!(&s * &e2, e2 / 2f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(s.clone(), s.transpose(), epsilon = 0.0);
    }

    #[test]
    fn inverse_sqrt_rejects_singular_and_asymmetric() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(inverse_sqrt_spd(&singular), Err(EndaError::NumericalRank(_))));
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            inverse_sqrt_spd(&indefinite),
            Err(EndaError::NumericalRank(_))
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(inverse_sqrt_spd(&asym).is_err());
    }

    #[test]
    fn zero_anomalies_give_identity() {
        let a = DMatrix::zeros(1, 4);
        for route in [TransformRoute::Dense, TransformRoute::LowRank] {
            let t = etkf_transform_with(&a, &scalar_obs(1.0, 1.0), &DVector::zeros(1), None, route).unwrap();
            assert_abs_diff_eq!(t.s(), DMatrix::identity(4, 4), epsilon = 1e-14);
            assert_abs_diff_eq!(t.w_mean, DVector::zeros(4), epsilon = 1e-14);
        }
    }

    #[test]
    fn two_member_hand_computation() {
        let a = DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]);
        let obs = scalar_obs(3.0, 2.0);
        let y_mean = DVector::from_vec(vec![1.0]);
        for route in [TransformRoute::Dense, TransformRoute::LowRank] {
            let t = etkf_transform_with(&a, &obs, &y_mean, None, route).unwrap();
            let s = t.s();
            let e1 = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
            let e2 = DVector::from_vec(vec![1.0, -1.0]) / 2f64.sqrt();
            assert_abs_diff_eq!(&s * &e1, e1.clone(), epsilon = 1e-12);
            assert_abs_diff_eq!(&s * &e2, e2 / 2f64.sqrt(), epsilon = 1e-12);
            assert_abs_diff_eq!(t.w_mean[0], -0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(t.w_mean[1], 0.5, epsilon = 1e-12);

            let prior = Ensemble::from_rows(&[[0.0], [2.0]]).unwrap();
            let post = etkf_update(&prior, &t).unwrap();
            let r = 1.0 / 2f64.sqrt();
            assert_abs_diff_eq!(post.get(0, 0), 2.0 - r, epsilon = 1e-12);
            assert_abs_diff_eq!(post.get(1, 0), 2.0 + r, epsilon = 1e-12);
        }
    }

    #[test]
    fn vanishing_information_limit() {
        let a = DMatrix::from_row_slice(1, 3, &[-1.0, 0.5, 0.5]);
        let t = etkf_transform(&a, &scalar_obs(2.0, 1e6), &DVector::zeros(1)).unwrap();
        assert_abs_diff_eq!(t.s(), DMatrix::identity(3, 3), epsilon = 1e-4);
        assert_abs_diff_eq!(t.w_mean, DVector::zeros(3), epsilon = 1e-4);
    }

    #[test]
    fn identity_transform_is_noop() {
        let e = Ensemble::from_rows(&[[0.0, 1.0], [2.0, -3.0], [5.0, 4.0]]).unwrap();
        let out = etkf_update(&e, &EtkfTransform::identity(3)).unwrap();
        for (a, b) in e.as_slice().iter().zip(out.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn non_centered_anomalies_rejected() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(matches!(
            etkf_transform(&a, &scalar_obs(0.0, 1.0), &DVector::zeros(1)),
            Err(EndaError::Precondition(_))
        ));
    }

    fn random_instance(seed: u64, members: usize, ny: usize, d: usize) -> (Ensemble, ObservationSet, PredictedData) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..members)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let e = Ensemble::from_rows(&rows).unwrap();
        let h = DMatrix::from_fn(ny, d, |_, _| rng.random_range(-1.0..1.0));
        let pred: Vec<Vec<f64>> = rows
            .iter()
            .map(|u| {
                (&h * DVector::from_column_slice(u))
                    .iter()
                    .map(|v| v.sin() + v)
                    .collect()
            })
            .collect();
        let y = PredictedData::from_rows(&pred).unwrap();
        let obs = ObservationSet::new(
            (0..ny).map(|_| rng.random_range(-1.0..1.0)).collect(),
            NoiseCovariance::diagonal((0..ny).map(|_| rng.random_range(0.2..2.0)).collect()).unwrap(),
            (0..ny).map(|_| [rng.random(), rng.random()]).collect(),
        )
        .unwrap();
        (e, obs, y)
    }

    proptest! {
        #[test]
        fn routes_agree_and_s_preserves_ones(seed in 0u64..1000, members in 2usize..12, ny in 1usize..6) {
            let (e, obs, y) = random_instance(seed, members, ny, 3);
            let a = predicted_anomalies(&y).unwrap();
            let dense = etkf_transform_with(&a, &obs, &y.mean(), None, TransformRoute::Dense).unwrap();
            let low = etkf_transform_with(&a, &obs, &y.mean(), None, TransformRoute::LowRank).unwrap();
            let sd = dense.s();
            prop_assert!((&sd - low.s()).amax() < 1e-10);
            prop_assert!((&dense.w_mean - &low.w_mean).amax() < 1e-10);
            let ones = DVector::from_element(members, 1.0);
            prop_assert!((&sd * &ones - &ones).amax() < 1e-8);

            let post = etkf_update(&e, &dense).unwrap();
            let ua = post.anomalies();
            for r in 0..ua.nrows() {
                prop_assert!(ua.row(r).sum().abs() < 1e-10);
            }
        }

        #[test]
        fn update_is_affine(seed in 0u64..1000, members in 2usize..10, shift in -5.0f64..5.0) {
            let (e, obs, y) = random_instance(seed, members, 2, 2);
            let a = predicted_anomalies(&y).unwrap();
            let t = etkf_transform(&a, &obs, &y.mean()).unwrap();
            let shifted = Ensemble::from_row_major(
                members, 2, e.as_slice().iter().map(|v| v + shift).collect()).unwrap();
            let p0 = etkf_update(&e, &t).unwrap();
            let p1 = etkf_update(&shifted, &t).unwrap();
            for (a, b) in p0.as_slice().iter().zip(p1.as_slice()) {
                prop_assert!((b - a - shift).abs() < 1e-10);
            }
        }
    }
}
