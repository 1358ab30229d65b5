//! Multi-trial experiments: sigma sweeps, sample-count sweeps and
//! (beta, eta_eff) grids, with convergence statistics and persistence.

pub mod config;
pub mod persist;
pub mod stats;
pub mod sweep;
pub mod trial;

pub use config::{default_threshold, log_grid, ExperimentConfig, GridSpec, TrialSettings};
pub use persist::{persist, read_records, write_cells, write_critical, write_records, Persisted};
pub use sweep::{critical_sigma, CellSummary, CriticalSigma, Experiment, SweepResult, TOP_K};
pub use trial::{evaluate_accuracy, output_voltages, run_trial, trial_seed, EvalPoint, TrialRecord};
