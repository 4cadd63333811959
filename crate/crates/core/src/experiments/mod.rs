//! Twin experiments: configuration, deterministic seeding, replicate sweeps
//! and result tables.

mod config;
mod results;
pub mod seeds;
mod summary;
mod twin;

pub use config::{CubicConfig, ExperimentConfig, KlConfig, Method, ObservationConfig, Problem};
pub use results::{
    parse_replicates_csv, read_replicates_csv, replicates_to_csv_string, write_replicates_csv, JoinedF64,
    ReplicateResult,
};
pub use summary::{summarize, summary_to_csv_string, write_summary_csv, Stat, SummaryRow, SUMMARY_METRICS};
pub use twin::{
    posterior_pdfs, run_reference_is, run_twin, sweep_localization, thread_pool, Manifest, Posterior, ReferenceArchive,
    ReferenceSamples, ReplicateOutcome, SweepResult, SweepRow, TwinRun, TwinSetup,
};
