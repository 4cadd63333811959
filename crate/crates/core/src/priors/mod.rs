//! Parametrisations and priors: the five-parameter layered permeability and
//! Gaussian random fields through their Karhunen–Loève expansion.

mod kl;
mod layered;

pub use kl::{
    exp_covariance, kl_basis, kl_to_logperm, logperm_to_modes, sample_grf_prior, KLBasis, ModeProjection,
    CORRELATION_RANGE, MEAN_LOG_K, MODE_FLOOR,
};
pub use layered::{
    five_param_truth, layered_permeability, layered_permeability_with, raw_to_transformed, sample_five_param_prior,
    transformed_to_raw, LayerOrder, LayeredParams, PRIOR_BOUNDS,
};

use crate::error::{EndaError, Result};

/// `log(x / (1 − x))` on the open unit interval.
pub fn logit(x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(EndaError::Domain(format!("logit argument {x} outside (0, 1)")));
    }
    Ok((x / (1.0 - x)).ln())
}

pub fn inverse_logit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}
