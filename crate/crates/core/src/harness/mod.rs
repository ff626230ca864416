//! Experiment orchestration: source stage, composition, adjustment runs,
//! logging, AUC, sweeps and forgetting curves.

mod auc;
mod compose;
mod config;
mod experiment;
mod runlog;
mod sweep;

pub use auc::{compute_auc, run_auc};
pub use compose::{compose_teams, TeamSpec, FULL_SOURCE_SEEDS};
pub use config::{Baseline, BudgetConfig, EnvKind, EnvironmentConfig, ExperimentConfig};
pub use experiment::*;
pub use runlog::{RunLog, RunRow};
pub use sweep::{sweep_sample, BoostParam};
