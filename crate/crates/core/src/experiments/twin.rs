use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, Problem};
use super::results::{write_replicates_csv, JoinedF64, ReplicateResult};
use super::seeds::{self, derive_seed};
use super::summary::{summarize, write_summary_csv, SummaryRow};
use crate::ensemble::{likelihood_weights, predicted_anomalies, Ensemble, ObservationSet, PredictedData, Weights};
use crate::error::{EndaError, Result};
use crate::etkf::{etkf_transform, etkf_update};
use crate::etpf::{etpf_update, TransportBackend};
use crate::forward::{cubic_forward, synthesize_from_clean, DarcyModel, GridSpec};
use crate::io::{
    ensemble_from_record, ensemble_record, kl_basis_from_snapshot, kl_basis_snapshot, write_histogram_csv, Record,
    Snapshot,
};
use crate::localization::{letkf_update, letpf_update, LocalizationConfig};
use crate::metrics::{
    data_misfit, ensemble_variance_logperm, kl_divergence_hist, relative_error, rmse_logperm, weighted_histogram,
    Histogram, KL_BINS,
};
use crate::priors::{
    exp_covariance, five_param_truth, kl_basis, kl_to_logperm, layered_permeability, logperm_to_modes,
    sample_five_param_prior, sample_grf_prior, transformed_to_raw, KLBasis, LayeredParams, MEAN_LOG_K,
};

/// Parameters up to this dimension get per-parameter columns and histograms.
const LOW_DIM: usize = 5;
const MODE_ERRORS: usize = 3;

/// Worker pool honouring `ENDA_THREADS` (default: all cores).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var("ENDA_THREADS") {
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| EndaError::Config(format!("ENDA_THREADS must be a positive integer, got `{s}`")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| EndaError::Config(format!("cannot start worker pool: {e}")))
}

enum Model {
    Cubic,
    FiveParam {
        darcy: DarcyModel,
        truth: LayeredParams,
    },
    KlField {
        darcy: DarcyModel,
        basis: KLBasis,
        truth_field: Vec<f64>,
        truth_modes: Vec<f64>,
    },
}

/// Truth, observations and forward model of a configured twin experiment.
pub struct TwinSetup {
    pub cfg: ExperimentConfig,
    pub obs: ObservationSet,
    pub truth_seed: u64,
    pub noise_seed: u64,
    model: Model,
}

fn load_or_build_basis(cfg: &ExperimentConfig, grid: &GridSpec) -> Result<KLBasis> {
    let key = [grid.n() as f64, cfg.kl.correlation_range];
    if let Some(path) = &cfg.kl.basis_cache {
        if path.exists() {
            let snap = Snapshot::read(path)?;
            if snap.get("kl_config")?.data != key {
                return Err(EndaError::Config(format!(
                    "basis cache {} was built for a different grid or correlation range",
                    path.display()
                )));
            }
            let mut b = kl_basis_from_snapshot(&snap)?;
            b.set_truncation(b.size())?;
            return Ok(b);
        }
    }
    let b = kl_basis(&exp_covariance(grid, cfg.kl.correlation_range)?, MEAN_LOG_K)?;
    if let Some(path) = &cfg.kl.basis_cache {
        let mut snap = kl_basis_snapshot(&b);
        snap.push(Record::new("kl_config", 1, 2, key.to_vec())?);
        snap.write(path)?;
    }
    Ok(b)
}

impl TwinSetup {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.observation_spec()?;
        let truth_seed = derive_seed(cfg.seed, seeds::TRUTH, 0, 0);
        let noise_seed = derive_seed(cfg.seed, seeds::NOISE, 0, 0);
        let (model, clean) = match cfg.problem {
            Problem::Cubic => (Model::Cubic, vec![cubic_forward(cfg.cubic.truth)]),
            Problem::FiveParam => {
                let grid = GridSpec::new(cfg.grid_n)?;
                let darcy = DarcyModel::new(grid, &spec)?;
                let truth = five_param_truth();
                let clean = darcy.forward(&layered_permeability(&truth, &grid)?)?;
                (Model::FiveParam { darcy, truth }, clean)
            }
            Problem::KlField => {
                let grid = GridSpec::new(cfg.grid_n)?;
                let darcy = DarcyModel::new(grid, &spec)?;
                let mut basis = load_or_build_basis(cfg, &grid)?;
                let truth_modes = sample_grf_prior(&basis, truth_seed, 1)?.into_vec();
                let truth_field = kl_to_logperm(&truth_modes, &basis)?;
                basis.set_truncation(cfg.truncation.unwrap_or(basis.size()))?;
                let clean = darcy.forward_log(&truth_field)?;
                (
                    Model::KlField {
                        darcy,
                        basis,
                        truth_field,
                        truth_modes,
                    },
                    clean,
                )
            }
        };
        let obs = synthesize_from_clean(&clean, &spec, noise_seed)?;
        Ok(Self {
            cfg: cfg.clone(),
            obs,
            truth_seed,
            noise_seed,
            model,
        })
    }

    pub fn state_dim(&self) -> usize {
        match &self.model {
            Model::Cubic => 1,
            Model::FiveParam { .. } => 5,
            Model::KlField { basis, .. } => basis.size(),
        }
    }

    /// Names of the reported parameters (empty for grid fields).
    pub fn param_names(&self) -> Vec<String> {
        match &self.model {
            Model::Cubic => vec!["u".into()],
            Model::FiveParam { .. } => ["a", "b", "c", "log_k1", "log_k2"].map(String::from).to_vec(),
            Model::KlField { .. } => Vec::new(),
        }
    }

    /// Truth in reporting coordinates.
    pub fn truth_report(&self) -> Vec<f64> {
        match &self.model {
            Model::Cubic => vec![self.cfg.cubic.truth],
            Model::FiveParam { truth, .. } => truth.to_raw().to_vec(),
            Model::KlField { truth_field, .. } => truth_field.clone(),
        }
    }

    pub fn prior_seed(&self, members: usize, replicate: usize) -> u64 {
        derive_seed(self.cfg.seed, seeds::PRIOR, members as u64, replicate as u64)
    }

    /// Prior draw in state coordinates.
    pub fn sample_prior(&self, seed: u64, members: usize) -> Result<Ensemble> {
        match &self.model {
            Model::Cubic => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let dist = Normal::new(self.cfg.cubic.prior_mean, self.cfg.cubic.prior_std)
                    .map_err(|e| EndaError::Config(e.to_string()))?;
                Ensemble::from_row_major(members, 1, (0..members).map(|_| dist.sample(&mut rng)).collect())
            }
            Model::FiveParam { .. } => sample_five_param_prior(seed, members),
            Model::KlField { basis, .. } => {
                let modes = sample_grf_prior(basis, seed, members)?;
                let rows = (0..members)
                    .into_par_iter()
                    .map(|m| kl_to_logperm(modes.member(m), basis))
                    .collect::<Result<Vec<_>>>()?;
                Ensemble::from_rows(&rows)
            }
        }
    }

    pub fn forward(&self, u: &[f64]) -> Result<Vec<f64>> {
        match &self.model {
            Model::Cubic => Ok(vec![cubic_forward(u[0])]),
            Model::FiveParam { darcy, .. } => {
                let p = LayeredParams::from_transformed(u)?;
                darcy.forward(&layered_permeability(&p, &darcy.grid)?)
            }
            Model::KlField { darcy, .. } => darcy.forward_log(u),
        }
    }

    /// Forward map applied to every member in parallel.
    pub fn predict(&self, e: &Ensemble) -> Result<PredictedData> {
        let rows = (0..e.member_count())
            .into_par_iter()
            .map(|m| self.forward(e.member(m)))
            .collect::<Result<Vec<_>>>()?;
        PredictedData::from_rows(&rows)
    }

    /// Members in reporting coordinates.
    pub fn report(&self, e: &Ensemble) -> Result<Ensemble> {
        match &self.model {
            Model::FiveParam { .. } => {
                let rows = e.members().map(transformed_to_raw).collect::<Result<Vec<_>>>()?;
                Ensemble::from_rows(&rows)
            }
            _ => Ok(e.clone()),
        }
    }

    fn localization(&self, radius: Option<f64>) -> Result<LocalizationConfig> {
        let r = radius
            .or(self.cfg.localization_radius)
            .ok_or_else(|| EndaError::Config("localized method without a radius".into()))?;
        LocalizationConfig::new(r)
    }

    /// One assimilation step in state coordinates.
    pub fn assimilate(
        &self,
        method: Method,
        prior: &Ensemble,
        y: &PredictedData,
        radius: Option<f64>,
    ) -> Result<(Ensemble, Option<Weights>)> {
        match method {
            Method::Is => Ok((prior.clone(), Some(likelihood_weights(y, &self.obs)?))),
            Method::Etkf => {
                let a = predicted_anomalies(y)?;
                let t = etkf_transform(&a, &self.obs, &y.mean())?;
                Ok((etkf_update(prior, &t)?, None))
            }
            Method::Etpf => {
                let w = likelihood_weights(y, &self.obs)?;
                Ok((etpf_update(prior, &w, TransportBackend::Auto)?, None))
            }
            Method::Letkf | Method::Letpf => {
                let Model::KlField { darcy, basis, .. } = &self.model else {
                    return Err(EndaError::Precondition(
                        "localization applies only to grid-indexed parameters".into(),
                    ));
                };
                let loc = self.localization(radius)?;
                let centers = darcy.grid.centers();
                let local = if method == Method::Letkf {
                    let a = predicted_anomalies(y)?;
                    letkf_update(prior, &a, &self.obs, &y.mean(), &centers, &loc)?
                } else {
                    letpf_update(prior, y, &self.obs, &centers, &loc)?
                };
                if basis.truncation() == basis.size() {
                    return Ok((local, None));
                }
                // Back onto the truncated parametrisation.
                let rows = (0..local.member_count())
                    .into_par_iter()
                    .map(|m| kl_to_logperm(&logperm_to_modes(local.member(m), basis)?.modes, basis))
                    .collect::<Result<Vec<_>>>()?;
                Ok((Ensemble::from_rows(&rows)?, None))
            }
        }
    }

    fn mode_errors(&self, mean: &[f64]) -> Option<Vec<f64>> {
        let Model::KlField { basis, truth_modes, .. } = &self.model else {
            return None;
        };
        let centred = DVector::from_iterator(mean.len(), mean.iter().map(|v| v - basis.mean_log_k));
        Some(
            (0..MODE_ERRORS.min(basis.size()))
                .map(|i| {
                    let z = basis.eigenvectors.column(i).dot(&centred) / basis.eigenvalues[i].sqrt();
                    (z - truth_modes[i]).powi(2)
                })
                .collect(),
        )
    }

    fn run_replicate(
        &self,
        members: usize,
        replicate: usize,
        radius: Option<f64>,
        reference: Option<&ReferenceSamples>,
    ) -> Result<(ReplicateResult, Posterior)> {
        let prior = self.sample_prior(self.prior_seed(members, replicate), members)?;
        self.evaluate(&prior, replicate, radius, reference)
    }

    /// Assimilates a given prior (state coordinates) and computes every
    /// metric. The seeded sweep calls this with its own prior draws; tests may
    /// pass a hand-made one.
    pub fn evaluate(
        &self,
        prior: &Ensemble,
        replicate: usize,
        radius: Option<f64>,
        reference: Option<&ReferenceSamples>,
    ) -> Result<(ReplicateResult, Posterior)> {
        if prior.dim() != self.state_dim() {
            return Err(EndaError::DimensionMismatch(format!(
                "prior has dimension {}, the problem has {}",
                prior.dim(),
                self.state_dim()
            )));
        }
        let method = self.cfg.method;
        let members = prior.member_count();
        let truth = self.truth_report();
        let y_b = self.predict(prior)?;
        let prior_rep = self.report(prior)?;
        let before = Moments::of(&prior_rep, None);

        let (analysis, weights) = self.assimilate(method, prior, &y_b, radius)?;
        let y_a_mean = match &weights {
            Some(w) => y_b.weighted_mean(w)?,
            None => self.predict(&analysis)?.mean(),
        };
        let post_rep = self.report(&analysis)?;
        let w_slice = weights.as_ref().map(|w| w.as_slice());
        let after = Moments::of(&post_rep, w_slice);

        let mut row = ReplicateResult::empty(method, members, replicate);
        row.misfit_before = Some(data_misfit(&y_b.mean(), &self.obs)?);
        row.misfit_after = Some(data_misfit(&y_a_mean, &self.obs)?);
        row.rmse_before = Some(rmse_logperm(&before.mean, &truth)?);
        row.rmse_after = Some(rmse_logperm(&after.mean, &truth)?);
        row.variance_after = match w_slice {
            Some(w) => Some(weighted_variance(&post_rep, &after.mean, w)),
            None if members >= 2 => Some(ensemble_variance_logperm(&post_rep, &after.mean)?),
            None => None,
        };
        if let Model::FiveParam { .. } = self.model {
            row.relative_error_before = Some(relative_error(&before.mean, &truth)?);
            row.relative_error_after = Some(relative_error(&after.mean, &truth)?);
        }
        if let Some(errs) = self.mode_errors(&after.mean) {
            row.mode_sq_error_1 = errs.first().copied();
            row.mode_sq_error_2 = errs.get(1).copied();
            row.mode_sq_error_3 = errs.get(2).copied();
        }
        if post_rep.dim() <= LOW_DIM {
            row.analysis_mean = JoinedF64(after.mean.clone());
            if let Some(std) = after.std {
                row.analysis_std = JoinedF64(std);
            }
            if let Some(r) = reference {
                row.kl_divergences = JoinedF64(
                    (0..post_rep.dim())
                        .map(|i| {
                            kl_divergence_hist(
                                &r.report.coordinate(i),
                                Some(&r.weights),
                                &post_rep.coordinate(i),
                                w_slice,
                                KL_BINS,
                            )
                        })
                        .collect::<Result<Vec<_>>>()?,
                );
            }
        }
        Ok((
            row,
            Posterior {
                report: post_rep,
                weights: weights.map(Weights::into_vec),
            },
        ))
    }

    /// Every `(M, replicate)` of the configuration, optionally with another
    /// localization radius. Failed replicates become error rows.
    pub fn execute(&self, radius: Option<f64>, reference: Option<&ReferenceSamples>) -> Vec<ReplicateOutcome> {
        let jobs: Vec<(usize, usize)> = self
            .cfg
            .ensemble_sizes
            .iter()
            .flat_map(|&m| (0..self.cfg.replicates).map(move |r| (m, r)))
            .collect();
        jobs.par_iter()
            .map(|&(m, r)| {
                let start = Instant::now();
                let out = self.run_replicate(m, r, radius, reference);
                let wall_time = start.elapsed().as_secs_f64();
                match out {
                    Ok((result, posterior)) => ReplicateOutcome {
                        result,
                        wall_time,
                        posterior: Some(posterior),
                    },
                    Err(e) => ReplicateOutcome {
                        result: ReplicateResult::failed(self.cfg.method, m, r, &e),
                        wall_time,
                        posterior: None,
                    },
                }
            })
            .collect()
    }

    pub fn manifest(&self) -> Result<Manifest> {
        Ok(Manifest {
            library_version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: self.cfg.hash()?,
            seed: self.cfg.seed,
            truth_seed: format!("{:016x}", self.truth_seed),
            noise_seed: format!("{:016x}", self.noise_seed),
            prior_seed_scheme: "derive_seed(seed, PRIOR, M, replicate)".into(),
            problem: self.cfg.problem,
            method: self.cfg.method,
            param_names: self.param_names(),
            truth: if self.state_dim() <= LOW_DIM {
                self.truth_report()
            } else {
                Vec::new()
            },
            y_obs: self.obs.y_obs.iter().copied().collect(),
        })
    }

    /// Importance-sampling reference run with `members` prior samples.
    pub fn reference_is(&self, members: usize) -> Result<ReferenceArchive> {
        let seed = derive_seed(self.cfg.seed, seeds::REFERENCE, members as u64, 0);
        let samples = self.sample_prior(seed, members)?;
        let y = self.predict(&samples)?;
        let weights = likelihood_weights(&y, &self.obs)?.into_vec();
        Ok(ReferenceArchive {
            problem: self.cfg.problem,
            seed,
            samples,
            weights,
        })
    }

    pub fn reference_samples(&self, archive: &ReferenceArchive) -> Result<ReferenceSamples> {
        if archive.problem != self.cfg.problem || archive.samples.dim() != self.state_dim() {
            return Err(EndaError::Config(
                "reference archive belongs to a different problem".into(),
            ));
        }
        Ok(ReferenceSamples {
            report: self.report(&archive.samples)?,
            weights: archive.weights.clone(),
        })
    }
}

fn weighted_variance(e: &Ensemble, mean: &[f64], w: &[f64]) -> f64 {
    e.members()
        .zip(w)
        .map(|(row, wm)| wm * row.iter().zip(mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum()
}

/// Per-coordinate mean and standard deviation; `M − 1` normalisation for
/// equal weights, plain weighted second moment otherwise.
struct Moments {
    mean: Vec<f64>,
    std: Option<Vec<f64>>,
}

impl Moments {
    fn of(e: &Ensemble, w: Option<&[f64]>) -> Self {
        let m = e.member_count();
        let d = e.dim();
        let mut mean = vec![0.0; d];
        let uniform = 1.0 / m as f64;
        for (k, row) in e.members().enumerate() {
            let wk = w.map_or(uniform, |w| w[k]);
            for (acc, v) in mean.iter_mut().zip(row) {
                *acc += wk * v;
            }
        }
        let std = if d > LOW_DIM || (w.is_none() && m < 2) {
            None
        } else {
            let mut var = vec![0.0; d];
            for (k, row) in e.members().enumerate() {
                let wk = w.map_or(1.0, |w| w[k]);
                for ((acc, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                    *acc += wk * (v - mu).powi(2);
                }
            }
            if w.is_none() {
                var.iter_mut().for_each(|v| *v /= (m - 1) as f64);
            }
            Some(var.into_iter().map(f64::sqrt).collect())
        };
        Self { mean, std }
    }
}

/// Analysis ensemble in reporting coordinates, with IS weights when present.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub report: Ensemble,
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub result: ReplicateResult,
    pub wall_time: f64,
    pub posterior: Option<Posterior>,
}

/// Provenance written next to the result tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub library_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub truth_seed: String,
    pub noise_seed: String,
    pub prior_seed_scheme: String,
    pub problem: Problem,
    pub method: Method,
    pub param_names: Vec<String>,
    pub truth: Vec<f64>,
    pub y_obs: Vec<f64>,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| EndaError::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| EndaError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EndaError::io(path, e))?;
        toml::from_str(&text).map_err(|e| EndaError::Format(format!("{}: {e}", path.display())))
    }
}

/// Weighted prior sample used as the "ground truth" posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceArchive {
    pub problem: Problem,
    pub seed: u64,
    /// Prior draw in state coordinates, unchanged by the weighting.
    pub samples: Ensemble,
    pub weights: Vec<f64>,
}

impl ReferenceArchive {
    fn problem_code(p: Problem) -> f64 {
        match p {
            Problem::Cubic => 0.0,
            Problem::FiveParam => 1.0,
            Problem::KlField => 2.0,
        }
    }

    pub fn to_snapshot(&self) -> Snapshot {
        let mut s = Snapshot::default();
        s.push(ensemble_record("samples", &self.samples));
        s.push(Record {
            name: "weights".into(),
            rows: self.weights.len(),
            cols: 1,
            data: self.weights.clone(),
        });
        // The seed is split into two exactly representable halves.
        s.push(Record {
            name: "meta".into(),
            rows: 1,
            cols: 3,
            data: vec![
                Self::problem_code(self.problem),
                (self.seed >> 32) as f64,
                (self.seed & 0xffff_ffff) as f64,
            ],
        });
        s
    }

    pub fn from_snapshot(s: &Snapshot) -> Result<Self> {
        let meta = &s.get("meta")?.data;
        if meta.len() != 3 {
            return Err(EndaError::Format("malformed reference metadata".into()));
        }
        let problem = [Problem::Cubic, Problem::FiveParam, Problem::KlField]
            .into_iter()
            .find(|p| Self::problem_code(*p) == meta[0])
            .ok_or_else(|| EndaError::Format("unknown problem code in reference".into()))?;
        let samples = ensemble_from_record(s.get("samples")?)?;
        let weights = s.get("weights")?.data.clone();
        if weights.len() != samples.member_count() {
            return Err(EndaError::Format("reference weights do not match samples".into()));
        }
        Ok(Self {
            problem,
            seed: ((meta[1] as u64) << 32) | meta[2] as u64,
            samples,
            weights,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_snapshot().write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_snapshot(&Snapshot::read(path)?)
    }
}

/// Reference samples converted to reporting coordinates.
#[derive(Debug, Clone)]
pub struct ReferenceSamples {
    pub report: Ensemble,
    pub weights: Vec<f64>,
}

/// Histogram of each coordinate on its own range, `KL_BINS` bins.
pub fn posterior_pdfs(names: &[String], e: &Ensemble, weights: Option<&[f64]>) -> Result<Vec<(String, Histogram)>> {
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let col = e.coordinate(i);
            let mut lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let mut hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if hi <= lo {
                lo -= 0.5;
                hi += 0.5;
            }
            Ok((name.clone(), weighted_histogram(&col, weights, lo, hi, KL_BINS)?))
        })
        .collect()
}

/// Results of [`run_twin`].
#[derive(Debug, Clone)]
pub struct TwinRun {
    pub results: Vec<ReplicateResult>,
    pub wall_times: Vec<f64>,
    pub summary: Vec<SummaryRow>,
    pub manifest: Manifest,
    /// Analysis histograms of the first replicate at the largest ensemble size.
    pub pdfs: Vec<(String, Histogram)>,
}

impl TwinRun {
    /// Writes `replicates.csv`, `summary.csv`, `run-manifest.toml`,
    /// `timings.csv` and `pdf_<param>.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| EndaError::io(dir, e))?;
        write_replicates_csv(&dir.join("replicates.csv"), &self.results)?;
        write_summary_csv(&dir.join("summary.csv"), &self.summary)?;
        self.manifest.write(&dir.join("run-manifest.toml"))?;
        let mut timings = String::from("method,M,replicate,wall_time\n");
        for (r, t) in self.results.iter().zip(&self.wall_times) {
            timings.push_str(&format!("{},{},{},{t}\n", r.method, r.members, r.replicate));
        }
        let tpath = dir.join("timings.csv");
        std::fs::write(&tpath, timings).map_err(|e| EndaError::io(&tpath, e))?;
        for (name, h) in &self.pdfs {
            write_histogram_csv(&dir.join(format!("pdf_{name}.csv")), h)?;
        }
        Ok(())
    }
}

fn collect_run(setup: &TwinSetup, outcomes: Vec<ReplicateOutcome>) -> Result<TwinRun> {
    let largest = setup.cfg.ensemble_sizes.iter().copied().max().unwrap_or(0);
    let mut pdfs = Vec::new();
    if let Some(p) = outcomes
        .iter()
        .find(|o| o.result.members == largest && o.result.replicate == 0)
        .and_then(|o| o.posterior.as_ref())
    {
        if p.report.dim() <= LOW_DIM {
            pdfs = posterior_pdfs(&setup.param_names(), &p.report, p.weights.as_deref())?;
        }
    }
    let results: Vec<ReplicateResult> = outcomes.iter().map(|o| o.result.clone()).collect();
    let truth = setup.manifest()?.truth;
    let summary = summarize(&results, (!truth.is_empty()).then_some(truth.as_slice()))?;
    Ok(TwinRun {
        wall_times: outcomes.iter().map(|o| o.wall_time).collect(),
        results,
        summary,
        manifest: setup.manifest()?,
        pdfs,
    })
}

/// Runs the configured sweep inside the `ENDA_THREADS` pool.
pub fn run_twin(cfg: &ExperimentConfig) -> Result<TwinRun> {
    thread_pool()?.install(|| {
        let setup = TwinSetup::prepare(cfg)?;
        let reference = match &cfg.reference {
            Some(path) => Some(setup.reference_samples(&ReferenceArchive::read(path)?)?),
            None => None,
        };
        let outcomes = setup.execute(None, reference.as_ref());
        collect_run(&setup, outcomes)
    })
}

/// Importance-sampling reference for the configured problem.
pub fn run_reference_is(cfg: &ExperimentConfig, members: usize) -> Result<(TwinSetup, ReferenceArchive)> {
    thread_pool()?.install(|| {
        let setup = TwinSetup::prepare(cfg)?;
        let archive = setup.reference_is(members)?;
        Ok((setup, archive))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub radius: f64,
    pub members: usize,
    pub mean_rmse_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Best radius per ensemble size.
    pub best_by_size: Vec<(usize, f64)>,
    /// Radius with the lowest mean RMSE over all sizes and replicates.
    pub best: f64,
}

/// Grid search over localization radii by mean analysis RMSE.
pub fn sweep_localization(cfg: &ExperimentConfig, radii: &[f64]) -> Result<SweepResult> {
    if !cfg.method.is_localized() {
        return Err(EndaError::Config(format!("{} is not a localized method", cfg.method)));
    }
    if radii.is_empty() {
        return Err(EndaError::Config("no radii to sweep".into()));
    }
    for r in radii {
        LocalizationConfig::new(*r)?;
    }
    thread_pool()?.install(|| {
        let setup = TwinSetup::prepare(cfg)?;
        let mut rows = Vec::new();
        let mut overall = Vec::new();
        for &radius in radii {
            let outcomes = setup.execute(Some(radius), None);
            let ok: Vec<f64> = outcomes.iter().filter_map(|o| o.result.rmse_after).collect();
            overall.push((radius, mean(&ok)));
            for &m in &cfg.ensemble_sizes {
                let vals: Vec<f64> = outcomes
                    .iter()
                    .filter(|o| o.result.members == m)
                    .filter_map(|o| o.result.rmse_after)
                    .collect();
                rows.push(SweepRow {
                    radius,
                    members: m,
                    mean_rmse_after: mean(&vals),
                });
            }
        }
        let argmin = |cands: Vec<(f64, Option<f64>)>| {
            cands
                .into_iter()
                .filter_map(|(r, v)| v.map(|v| (r, v)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(r, _)| r)
        };
        let best = argmin(overall).ok_or_else(|| EndaError::NonConvergence("every sweep run failed".into()))?;
        let best_by_size = cfg
            .ensemble_sizes
            .iter()
            .filter_map(|&m| {
                argmin(
                    rows.iter()
                        .filter(|r| r.members == m)
                        .map(|r| (r.radius, r.mean_rmse_after))
                        .collect(),
                )
                .map(|r| (m, r))
            })
            .collect();
        Ok(SweepResult {
            rows,
            best_by_size,
            best,
        })
    })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}
