use rand::distr::{Distribution, Open01, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{inverse_logit, logit};
use crate::ensemble::Ensemble;
use crate::error::{EndaError, Result};
use crate::forward::{GridSpec, PermeabilityField};

/// Raw prior intervals for `(a, b, c, k1, k2)`.
pub const PRIOR_BOUNDS: [(f64, f64); 5] = [(0.0, 1.0), (0.0, 1.0), (-0.5, 0.5), (10.0, 15.0), (4.0, 7.0)];

/// Two-layer field with a fault at `x = 0.5`.
///
/// The interface runs from height `a` at `x = 0` to `b` at `x = 1`; the right
/// half is shifted down by `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayeredParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub log_k1: f64,
    pub log_k2: f64,
}

impl LayeredParams {
    /// Raw coordinates `(a, b, c, log k1, log k2)`.
    pub fn to_raw(&self) -> [f64; 5] {
        [self.a, self.b, self.c, self.log_k1, self.log_k2]
    }

    pub fn from_raw(u: &[f64]) -> Result<Self> {
        if u.len() != 5 {
            return Err(EndaError::DimensionMismatch(format!(
                "expected 5 parameters, got {}",
                u.len()
            )));
        }
        Ok(Self {
            a: u[0],
            b: u[1],
            c: u[2],
            log_k1: u[3],
            log_k2: u[4],
        })
    }

    /// From the filter coordinates `(logit a, logit b, c, log k1, log k2)`.
    pub fn from_transformed(u: &[f64]) -> Result<Self> {
        Self::from_raw(&transformed_to_raw(u)?)
    }

    pub fn interface_height(&self, x: f64) -> f64 {
        let mut h = self.a + (self.b - self.a) * x;
        if x >= 0.5 {
            h -= self.c;
        }
        h.clamp(0.0, 1.0)
    }
}

pub fn five_param_truth() -> LayeredParams {
    LayeredParams {
        a: 0.6,
        b: 0.3,
        c: -0.15,
        log_k1: 12f64.ln(),
        log_k2: 5f64.ln(),
    }
}

pub fn raw_to_transformed(u: &[f64]) -> Result<[f64; 5]> {
    let p = LayeredParams::from_raw(u)?;
    Ok([logit(p.a)?, logit(p.b)?, p.c, p.log_k1, p.log_k2])
}

pub fn transformed_to_raw(u: &[f64]) -> Result<[f64; 5]> {
    if u.len() != 5 {
        return Err(EndaError::DimensionMismatch(format!(
            "expected 5 parameters, got {}",
            u.len()
        )));
    }
    Ok([inverse_logit(u[0]), inverse_logit(u[1]), u[2], u[3], u[4]])
}

/// Which layer carries `k1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LayerOrder {
    #[default]
    BottomIsK1,
    TopIsK1,
}

pub fn layered_permeability(p: &LayeredParams, g: &GridSpec) -> Result<PermeabilityField> {
    layered_permeability_with(p, g, LayerOrder::BottomIsK1)
}

pub fn layered_permeability_with(p: &LayeredParams, g: &GridSpec, order: LayerOrder) -> Result<PermeabilityField> {
    let (k1, k2) = (p.log_k1.exp(), p.log_k2.exp());
    let (below, above) = match order {
        LayerOrder::BottomIsK1 => (k1, k2),
        LayerOrder::TopIsK1 => (k2, k1),
    };
    PermeabilityField::new(
        g.centers()
            .into_iter()
            .map(|[x, y]| if y < p.interface_height(x) { below } else { above })
            .collect(),
    )
}

/// `M` uniform prior draws in filter coordinates.
pub fn sample_five_param_prior(seed: u64, members: usize) -> Result<Ensemble> {
    if members == 0 {
        return Err(EndaError::Precondition("prior needs at least one member".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform = |(lo, hi): (f64, f64)| Uniform::new(lo, hi).expect("valid prior bounds");
    let c_dist = uniform(PRIOR_BOUNDS[2]);
    let k1_dist = uniform(PRIOR_BOUNDS[3]);
    let k2_dist = uniform(PRIOR_BOUNDS[4]);
    let mut data = Vec::with_capacity(members * 5);
    for _ in 0..members {
        let a: f64 = Open01.sample(&mut rng);
        let b: f64 = Open01.sample(&mut rng);
        let c = c_dist.sample(&mut rng);
        let k1 = k1_dist.sample(&mut rng);
        let k2 = k2_dist.sample(&mut rng);
        data.extend_from_slice(&[logit(a)?, logit(b)?, c, k1.ln(), k2.ln()]);
    }
    Ensemble::from_row_major(members, 5, data)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    #[test]
    fn raw_draws_respect_bounds() {
        let e = sample_five_param_prior(3, 2000).unwrap();
        for row in e.members() {
            let raw = transformed_to_raw(row).unwrap();
            let raw = [raw[0], raw[1], raw[2], raw[3].exp(), raw[4].exp()];
            for (v, (lo, hi)) in raw.iter().zip(PRIOR_BOUNDS) {
                assert!(*v >= lo && *v <= hi, "{v} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn prior_is_seeded() {
        assert_eq!(
            sample_five_param_prior(9, 10).unwrap(),
            sample_five_param_prior(9, 10).unwrap()
        );
        assert_ne!(
            sample_five_param_prior(9, 10).unwrap(),
            sample_five_param_prior(10, 10).unwrap()
        );
    }

    #[test]
    fn prior_moments() {
        let m = 100_000;
        let e = sample_five_param_prior(17, m).unwrap();
        let mut sums = [0.0; 3];
        for row in e.members() {
            sums[0] += inverse_logit(row[0]);
            sums[1] += row[2];
            sums[2] += row[3].exp();
        }
        assert_abs_diff_eq!(sums[0] / m as f64, 0.5, epsilon = 0.005);
        assert_abs_diff_eq!(sums[1] / m as f64, 0.0, epsilon = 0.005);
        assert_abs_diff_eq!(sums[2] / m as f64, 12.5, epsilon = 0.02);
    }

    #[test]
    fn flat_interface() {
        let g = GridSpec::new(10).unwrap();
        let p = LayeredParams {
            a: 0.5,
            b: 0.5,
            c: 0.0,
            log_k1: 12f64.ln(),
            log_k2: 5f64.ln(),
        };
        let k = layered_permeability(&p, &g).unwrap();
        for (c, v) in g.centers().iter().zip(k.values()) {
            let expect = if c[1] < 0.5 { 12.0 } else { 5.0 };
            assert_abs_diff_eq!(*v, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn no_fault_and_equal_ends_gives_x_independent_field() {
        let g = GridSpec::new(8).unwrap();
        let p = LayeredParams {
            a: 0.3,
            b: 0.3,
            c: 0.0,
            log_k1: 1.0,
            log_k2: 2.0,
        };
        let k = layered_permeability(&p, &g).unwrap();
        for j in 0..8 {
            let row = &k.values()[j * 8..(j + 1) * 8];
            assert!(row.iter().all(|v| *v == row[0]));
        }
    }

    #[test]
    fn truth_field_count() {
        let g = GridSpec::new(50).unwrap();
        let t = five_param_truth();
        let k = layered_permeability(&t, &g).unwrap();
        let count = k.values().iter().filter(|v| (**v - 12.0).abs() < 1e-9).count();
        let expected = g
            .centers()
            .iter()
            .filter(|[x, y]| {
                let h = 0.6 - 0.3 * x + if *x >= 0.5 { 0.15 } else { 0.0 };
                *y < h
            })
            .count();
        assert_eq!(count, expected);
        let mut distinct: Vec<f64> = k.values().to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(distinct.len(), 2);
    }

    #[test]
    fn fault_sign_convention() {
        // c < 0 raises the right half.
        let p = LayeredParams {
            a: 0.5,
            b: 0.5,
            c: -0.2,
            log_k1: 0.0,
            log_k2: 0.0,
        };
        assert_abs_diff_eq!(p.interface_height(0.25), 0.5);
        assert_abs_diff_eq!(p.interface_height(0.75), 0.7);
        let q = LayeredParams { c: 0.9, ..p };
        assert_eq!(q.interface_height(0.75), 0.0);
    }

    #[test]
    fn swapped_layers() {
        let g = GridSpec::new(4).unwrap();
        let p = LayeredParams {
            a: 0.5,
            b: 0.5,
            c: 0.0,
            log_k1: 2.0,
            log_k2: 1.0,
        };
        let k = layered_permeability_with(&p, &g, LayerOrder::TopIsK1).unwrap();
        assert_abs_diff_eq!(k.values()[0], 1f64.exp());
        assert_abs_diff_eq!(k.values()[15], 2f64.exp());
    }

    #[test]
    fn transform_roundtrip() {
        let raw = five_param_truth().to_raw();
        let t = raw_to_transformed(&raw).unwrap();
        let back = transformed_to_raw(&t).unwrap();
        for (a, b) in raw.iter().zip(back) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }
}
