//! Experiment configuration, per-seed simulation, artifact writing and sweeps.

mod config;
mod runner;
mod sweep;

pub use config::{DatasetKind, ExperimentConfig, ImbalanceKind, Method};
pub use runner::{
    run_experiment, run_in_memory, run_seed, seed_dir, summarize, ExperimentSummary,
    MetricsRecord, SeedResult, SeedSummary, Simulation,
};
pub use sweep::{run_sweep, SweepAxis, SweepPoint};
