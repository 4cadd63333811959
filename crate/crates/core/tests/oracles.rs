mod common;

use enda::ensemble::predicted_anomalies;
use enda::etkf::{etkf_transform, etkf_update};
use enda::transport::{cost_matrix, solve_ot_1d, solve_ot_exact};
use enda::{Ensemble, NoiseCovariance, ObservationSet, PredictedData};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn weights(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

#[test]
fn simplex_oracle_solves_a_known_problem() {
    // Two sources at 0 and 1 with masses (3/4, 1/4) onto uniform targets at 0 and 1:
    // half the mass stays at 0, a quarter moves from 0 to 1 at cost 1.
    let c = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert!((common::transport_lp(&c, &[0.75, 0.25]) - 0.25).abs() < 1e-12);
    assert!((common::enumerate_assignments(&c, &[2, 0]) - 0.5).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn network_simplex_matches_dense_simplex(
        rows in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 2), 2..7),
        raw in proptest::collection::vec(0.01f64..1.0, 7),
    ) {
        let m = rows.len();
        let e = Ensemble::from_rows(&rows).unwrap();
        let w = weights(&raw[..m]);
        let c = cost_matrix(&e);
        let plan = solve_ot_exact(&c, &w).unwrap();
        let lp = common::transport_lp(c.matrix(), &w);
        prop_assert!((plan.cost_value - lp).abs() < 1e-9, "{} vs {}", plan.cost_value, lp);
    }

    #[test]
    fn univariate_solver_matches_dense_simplex(
        values in proptest::collection::vec(-5.0f64..5.0, 2..8),
        raw in proptest::collection::vec(0.0f64..1.0, 8),
    ) {
        let m = values.len();
        let mut w = raw[..m].to_vec();
        w[0] += 0.01;
        let w = weights(&w);
        let e = Ensemble::from_row_major(m, 1, values.clone()).unwrap();
        let lp = common::transport_lp(cost_matrix(&e).matrix(), &w);
        let plan = solve_ot_1d(&values, &w).unwrap();
        prop_assert!((plan.cost_value - lp).abs() < 1e-9);
    }

    #[test]
    fn etkf_is_exact_for_linear_gaussian_problems(
        data in proptest::collection::vec(-3.0f64..3.0, 24),
        hdata in proptest::collection::vec(-1.0f64..1.0, 6),
        y in proptest::collection::vec(-4.0f64..4.0, 2),
        r in proptest::collection::vec(0.1f64..3.0, 2),
    ) {
        let e = Ensemble::from_row_major(8, 3, data).unwrap();
        let h = DMatrix::from_row_slice(2, 3, &hdata);
        let rows: Vec<Vec<f64>> = e.members().map(|u| (&h * DVector::from_column_slice(u)).iter().copied().collect()).collect();
        let yp = PredictedData::from_rows(&rows).unwrap();
        let obs = ObservationSet::new(y.clone(), NoiseCovariance::diagonal(r.clone()).unwrap(), vec![[0.5, 0.5]; 2]).unwrap();
        let t = etkf_transform(&predicted_anomalies(&yp).unwrap(), &obs, &yp.mean()).unwrap();
        let a = etkf_update(&e, &t).unwrap();
        let (mean_ref, cov_ref) = common::kalman(&e, &h, &r, &DVector::from_vec(y));
        let (mean, cov) = common::sample_moments(&a);
        prop_assert!((mean - &mean_ref).norm() < 1e-8 * mean_ref.norm().max(1.0));
        prop_assert!(common::rel_err(&cov, &cov_ref) < 1e-8);
    }
}
