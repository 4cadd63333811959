//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use enda::Ensemble;
use nalgebra::{DMatrix, DVector};

/// Closed-form Kalman analysis from the ensemble's sample mean and
/// covariance, for a linear observation matrix `h` and diagonal noise `r`.
pub fn kalman(e: &Ensemble, h: &DMatrix<f64>, r: &[f64], y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let (mean, p) = sample_moments(e);
    let s = h * &p * h.transpose() + DMatrix::from_diagonal(&DVector::from_column_slice(r));
    let k = &p * h.transpose() * s.try_inverse().expect("innovation covariance is invertible");
    let mean_a = &mean + &k * (y - h * &mean);
    let p_a = (DMatrix::identity(p.nrows(), p.nrows()) - &k * h) * &p;
    (mean_a, p_a)
}

/// Mean and `1/(M-1)` covariance of the members.
pub fn sample_moments(e: &Ensemble) -> (DVector<f64>, DMatrix<f64>) {
    let m = e.member_count() as f64;
    let mean = e.to_matrix().row_mean().transpose();
    let a = e.anomalies();
    (mean, &a * a.transpose() / (m - 1.0))
}

/// Minimum transport cost when row `m` holds `k[m]/M` mass and every column
/// needs `1/M`, by exhaustive enumeration of column-to-row assignments.
/// Integral supplies make some assignment optimal for the LP.
pub fn enumerate_assignments(c: &DMatrix<f64>, k: &[usize]) -> f64 {
    fn go(j: usize, c: &DMatrix<f64>, cap: &mut [usize], acc: f64, best: &mut f64) {
        if j == c.ncols() {
            *best = best.min(acc);
            return;
        }
        for m in 0..cap.len() {
            if cap[m] > 0 {
                cap[m] -= 1;
                go(j + 1, c, cap, acc + c[(m, j)], best);
                cap[m] += 1;
            }
        }
    }
    assert_eq!(k.iter().sum::<usize>(), c.ncols());
    let mut best = f64::INFINITY;
    go(0, c, &mut k.to_vec(), 0.0, &mut best);
    best / c.ncols() as f64
}

/// Dense two-phase simplex with Bland's rule: `min cᵀx` subject to
/// `A x = b`, `x >= 0`. Returns `None` when infeasible.
pub fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Option<f64> {
    const EPS: f64 = 1e-11;
    let (m, n) = (a.len(), c.len());
    let width = n + m + 1;
    let rhs = width - 1;
    let mut t = vec![vec![0.0; width]; m];
    let mut basis: Vec<usize> = (n..n + m).collect();
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = s * a[i][j];
        }
        t[i][n + i] = 1.0;
        t[i][rhs] = s * b[i];
    }

    fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, col: usize) {
        let p = t[r][col];
        t[r].iter_mut().for_each(|v| *v /= p);
        let pivot_row = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r && row[col] != 0.0 {
                let f = row[col];
                row.iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
        basis[r] = col;
    }

    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| loop {
        let entering = (0..allowed)
            .find(|&j| !basis.contains(&j) && cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>() < -EPS);
        let Some(j) = entering else { return };
        let leave = (0..m)
            .filter(|&i| t[i][j] > EPS)
            .min_by(|&p, &q| {
                let (rp, rq) = (t[p][rhs] / t[p][j], t[q][rhs] / t[q][j]);
                rp.partial_cmp(&rq).unwrap().then(basis[p].cmp(&basis[q]))
            })
            .expect("transport LPs are bounded");
        pivot(t, basis, leave, j);
    };

    let phase1: Vec<f64> = (0..n + m).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
    run(&mut t, &mut basis, &phase1, n + m);
    let infeasibility: f64 = (0..m).filter(|&i| basis[i] >= n).map(|i| t[i][rhs]).sum();
    if infeasibility > 1e-9 {
        return None;
    }
    for i in 0..m {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| t[i][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, i, j);
            }
        }
    }
    let mut phase2 = c.to_vec();
    phase2.extend(std::iter::repeat(0.0).take(m));
    run(&mut t, &mut basis, &phase2, n);
    Some((0..m).map(|i| phase2[basis[i]] * t[i][rhs]).sum())
}

/// Optimal cost of the transport LP with row marginals `w` and uniform
/// column marginals, via [`simplex_min`].
pub fn transport_lp(c: &DMatrix<f64>, w: &[f64]) -> f64 {
    let size = w.len();
    let vars = size * size;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for m in 0..size {
        let mut row = vec![0.0; vars];
        (0..size).for_each(|j| row[m * size + j] = 1.0);
        a.push(row);
        b.push(w[m]);
    }
    for j in 0..size {
        let mut row = vec![0.0; vars];
        (0..size).for_each(|m| row[m * size + j] = 1.0);
        a.push(row);
        b.push(1.0 / size as f64);
    }
    let cost: Vec<f64> = (0..vars).map(|v| c[(v / size, v % size)]).collect();
    simplex_min(&a, &b, &cost).expect("balanced transport problems are feasible")
}

/// `|a - b| / max(|b|, 1)` over matrices of equal shape, in Frobenius norm.
pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}
