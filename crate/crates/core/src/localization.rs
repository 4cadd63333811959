//! Distance-based localization of the ETKF and ETPF updates.
//!
//! Each parameter coordinate is attached to a point `X_i` of the unit square.
//! Observations are down-weighted per coordinate by a taper of their
//! Euclidean distance to `X_i`, and only coordinate `i` of every member is
//! updated with the resulting local transform. Grid points are processed in
//! parallel; results are assembled by index so the output does not depend on
//! scheduling.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::ensemble::{ensemble_mean, squared_misfits, weights_from_misfits, Ensemble, ObservationSet, PredictedData};
use crate::error::{EndaError, Result};
use crate::etkf::{etkf_transform_with, TransformRoute};
use crate::transport::solve_ot_1d;

/// Gaspari–Cohn compactly supported quintic, with support `[0, 2)`.
pub fn gaspari_cohn(r: f64) -> Result<f64> {
    if r.is_nan() || r < 0.0 {
        return Err(EndaError::Domain(format!("taper argument {r} is negative")));
    }
    let v = if r <= 1.0 {
        1.0 - 5.0 / 3.0 * r.powi(2) + 5.0 / 8.0 * r.powi(3) + 0.5 * r.powi(4) - 0.25 * r.powi(5)
    } else if r < 2.0 {
        -2.0 / (3.0 * r) + 4.0 - 5.0 * r + 5.0 / 3.0 * r.powi(2) + 5.0 / 8.0 * r.powi(3) - 0.5 * r.powi(4)
            + r.powi(5) / 12.0
    } else {
        0.0
    };
    // Roundoff near r = 2 can leave a tiny negative value.
    Ok(v.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Taper {
    #[default]
    GaspariCohn,
}

impl Taper {
    pub fn eval(self, r: f64) -> Result<f64> {
        match self {
            Taper::GaspariCohn => gaspari_cohn(r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationConfig {
    radius: f64,
    pub taper: Taper,
}

impl LocalizationConfig {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(EndaError::Config(format!(
                "localization radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Self {
            radius,
            taper: Taper::GaspariCohn,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Diagonal of the observation-space taper for one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct TaperDiagonal {
    pub entries: Vec<f64>,
}

impl TaperDiagonal {
    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|c| *c == 0.0)
    }
}

pub fn taper_diagonal(x: [f64; 2], obs: &ObservationSet, cfg: &LocalizationConfig) -> Result<TaperDiagonal> {
    let entries = obs
        .locations
        .iter()
        .map(|r| {
            let dist = ((x[0] - r[0]).powi(2) + (x[1] - r[1]).powi(2)).sqrt();
            cfg.taper.eval(dist / cfg.radius)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaperDiagonal { entries })
}

fn check_grid(e: &Ensemble, centers: &[[f64; 2]]) -> Result<()> {
    if centers.len() != e.dim() {
        return Err(EndaError::Precondition(format!(
            "localization needs one grid point per parameter: {} points for dimension {}",
            centers.len(),
            e.dim()
        )));
    }
    if e.member_count() < 2 {
        return Err(EndaError::Precondition(
            "localized updates need at least two members".into(),
        ));
    }
    Ok(())
}

/// Writes per-coordinate analysis columns into a row-major ensemble.
fn assemble(members: usize, columns: Vec<Vec<f64>>) -> Result<Ensemble> {
    let dim = columns.len();
    let mut data = vec![0.0; members * dim];
    for (i, col) in columns.into_iter().enumerate() {
        for (m, v) in col.into_iter().enumerate() {
            data[m * dim + i] = v;
        }
    }
    Ensemble::from_row_major(members, dim, data)
}

/// Localized ETKF. `a` are the predicted anomalies (`N_y x M`) and `y_mean`
/// the predicted-data mean; `centers[i]` is the location of coordinate `i`.
pub fn letkf_update(
    e: &Ensemble,
    a: &DMatrix<f64>,
    obs: &ObservationSet,
    y_mean: &DVector<f64>,
    centers: &[[f64; 2]],
    cfg: &LocalizationConfig,
) -> Result<Ensemble> {
    check_grid(e, centers)?;
    let members = e.member_count();
    if a.ncols() != members {
        return Err(EndaError::DimensionMismatch(format!(
            "anomalies for {} members, ensemble has {members}",
            a.ncols()
        )));
    }
    let mean = ensemble_mean(e);
    let columns = (0..e.dim())
        .into_par_iter()
        .map(|i| {
            let col = e.coordinate(i);
            let taper = taper_diagonal(centers[i], obs, cfg)?;
            if taper.is_zero() {
                return Ok(col);
            }
            let t = etkf_transform_with(a, obs, y_mean, Some(&taper.entries), TransformRoute::Auto)?;
            let row = DMatrix::from_iterator(1, members, col.iter().map(|v| v - mean[i]));
            let shift = mean[i] + (&row * &t.w_mean)[0];
            let ua = t.sqrt.right_apply(&row);
            Ok(ua.iter().map(|v| shift + v).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(members, columns)
}

/// Localized ETPF: local likelihood weights and a univariate coupling per
/// coordinate.
pub fn letpf_update(
    e: &Ensemble,
    y: &PredictedData,
    obs: &ObservationSet,
    centers: &[[f64; 2]],
    cfg: &LocalizationConfig,
) -> Result<Ensemble> {
    check_grid(e, centers)?;
    let members = e.member_count();
    if y.member_count() != members {
        return Err(EndaError::DimensionMismatch(format!(
            "predicted data for {} members, ensemble has {members}",
            y.member_count()
        )));
    }
    y.check_against(obs)?;
    let columns = (0..e.dim())
        .into_par_iter()
        .map(|i| {
            let col = e.coordinate(i);
            let taper = taper_diagonal(centers[i], obs, cfg)?;
            if taper.is_zero() {
                return Ok(col);
            }
            let w = weights_from_misfits(&squared_misfits(y, obs, Some(&taper.entries))?)?;
            let plan = solve_ot_1d(&col, &w)?;
            let mut out = vec![0.0; members];
            for entry in &plan.entries {
                out[entry.col] += members as f64 * entry.mass * col[entry.row];
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    assemble(members, columns)
}

/// Local weights at every grid point, mainly for diagnostics.
pub fn local_weights(
    y: &PredictedData,
    obs: &ObservationSet,
    centers: &[[f64; 2]],
    cfg: &LocalizationConfig,
) -> Result<Vec<Vec<f64>>> {
    centers
        .par_iter()
        .map(|x| {
            let taper = taper_diagonal(*x, obs, cfg)?;
            Ok(weights_from_misfits(&squared_misfits(y, obs, Some(&taper.entries))?)?.into_vec())
        })
        .collect()
}
