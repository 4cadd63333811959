//! Ensemble data assimilation for Bayesian parameter estimation: importance
//! sampling, the ensemble transform Kalman filter, the ensemble transform
//! particle filter and their localized variants, with the forward models,
//! priors and diagnostics used in twin experiments.

pub mod ensemble;
pub mod error;
pub mod etkf;
pub mod etpf;
pub mod experiments;
pub mod forward;
pub mod io;
pub mod localization;
pub mod metrics;
pub mod priors;
pub mod transport;

pub use ensemble::{Ensemble, NoiseCovariance, ObservationSet, PredictedData, Weights};
pub use error::{EndaError, Result};
