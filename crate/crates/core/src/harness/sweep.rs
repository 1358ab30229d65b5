use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{load_split, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, TrialSettings};
use crate::harness::stats::{mean, rate, top_k_mean};
use crate::harness::trial::{run_trial, TrialRecord};

/// Number of best trials averaged for the maximum-accuracy statistic.
pub const TOP_K: usize = 5;

/// One swept cell: a hyperparameter setting and the statistics of its trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub sigma: f64,
    pub n_samples: usize,
    pub beta: f64,
    pub eta_eff: f64,
    /// Mean final test accuracy over all trials.
    pub mean_acc: f64,
    /// Mean of the `TOP_K` highest per-trial maximum accuracies.
    pub max_acc: f64,
    pub max_acc_err: f64,
    pub conv_rate: f64,
    pub trials: usize,
}

impl CellSummary {
    pub fn from_records(records: &[&TrialRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::InvalidArgument("no records for cell".into()))?;
        let s = &first.settings;
        let finals: Vec<f64> = records.iter().map(|r| r.final_accuracy).collect();
        let maxes: Vec<f64> = records.iter().map(|r| r.max_accuracy).collect();
        let (max_acc, max_acc_err) = top_k_mean(&maxes, TOP_K);
        Ok(Self {
            sigma: s.sigma,
            n_samples: s.n_samples,
            beta: s.beta,
            eta_eff: s.eta_eff(),
            mean_acc: mean(&finals),
            max_acc,
            max_acc_err,
            conv_rate: rate(records.iter().map(|r| r.converged)),
            trials: records.len(),
        })
    }
}

/// Largest critical noise level per sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalSigma {
    pub n_samples: usize,
    /// `None` when no tested sigma reached the threshold.
    pub sigma: Option<f64>,
}

/// Largest `sigma` among `cells` (all with the same `n_samples`) whose mean
/// accuracy reaches `threshold`.
pub fn critical_sigma(cells: &[&CellSummary], threshold: f64) -> Option<f64> {
    cells
        .iter()
        .filter(|c| c.mean_acc >= threshold)
        .map(|c| c.sigma)
        .fold(None, |best, s| Some(best.map_or(s, |b: f64| b.max(s))))
}

/// Records and per-cell summaries of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<TrialRecord>,
    pub cells: Vec<CellSummary>,
}

/// A configuration with its datasets loaded.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl Experiment {
    /// Loads the configured dataset from the data root.
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        config.validate_trial()?;
        let root = config.data_root().ok_or_else(|| {
            Error::Config("no data directory: set data_dir or EPROP_DATA_DIR".into())
        })?;
        let train = load_split(&root, &config.dataset, Split::Train)?;
        let test = load_split(&root, &config.dataset, Split::Test)?;
        Ok(Self::with_data(config, train, test))
    }

    /// Uses already loaded data, applying the configured subsets.
    pub fn with_data(config: ExperimentConfig, train: LabeledDataset, test: LabeledDataset) -> Self {
        let train = match config.train_subset {
            Some(n) => train.head(n),
            None => train,
        };
        let test = match config.test_subset {
            Some(n) => test.head(n),
            None => test,
        };
        Self { config, train, test }
    }

    /// Trial `index` at the configured beta and eta.
    pub fn run_trial(&self, sigma: f64, n_samples: usize, index: usize) -> Result<TrialRecord> {
        let settings = self.config.settings(sigma, n_samples, self.config.beta, self.config.eta);
        self.run_settings(&settings, index)
    }

    pub fn run_settings(&self, settings: &TrialSettings, index: usize) -> Result<TrialRecord> {
        self.config.validate_trial()?;
        Ok(run_trial(settings, index, &self.train, &self.test)?.0)
    }

    /// Runs `trials` trials for each cell, in parallel, and summarizes.
    /// Records come back in cell order, then trial order.
    pub fn run_cells(&self, cells: &[TrialSettings]) -> Result<SweepResult> {
        self.config.validate()?;
        let trials = self.config.trials;
        let jobs: Vec<(usize, usize)> = (0..cells.len())
            .flat_map(|c| (0..trials).map(move |t| (c, t)))
            .collect();
        let records: Vec<TrialRecord> = jobs
            .par_iter()
            .map(|&(c, t)| Ok(run_trial(&cells[c], t, &self.train, &self.test)?.0))
            .collect::<Result<_>>()?;
        let summaries = records
            .chunks(trials)
            .map(|chunk| CellSummary::from_records(&chunk.iter().collect::<Vec<_>>()))
            .collect::<Result<_>>()?;
        Ok(SweepResult {
            records,
            cells: summaries,
        })
    }

    /// Accuracy against measurement noise at the first configured sample count.
    pub fn sweep_sigma(&self) -> Result<SweepResult> {
        if self.config.sigmas.is_empty() {
            return Err(Error::Config("sigma list is empty".into()));
        }
        let n = self.config.samples.first().copied().unwrap_or(1);
        let cells: Vec<TrialSettings> = self
            .config
            .sigmas
            .iter()
            .map(|&s| self.config.settings(s, n, self.config.beta, self.config.eta))
            .collect();
        self.run_cells(&cells)
    }

    /// Accuracy over (sample count, sigma), plus the critical sigma per
    /// sample count.
    pub fn sweep_samples(&self) -> Result<(SweepResult, Vec<CriticalSigma>)> {
        if self.config.samples.is_empty() {
            return Err(Error::Config("sample-count list is empty".into()));
        }
        if self.config.sigmas.is_empty() {
            return Err(Error::Config("sigma list is empty".into()));
        }
        let cells: Vec<TrialSettings> = self
            .config
            .samples
            .iter()
            .flat_map(|&n| {
                self.config
                    .sigmas
                    .iter()
                    .map(move |&s| self.config.settings(s, n, self.config.beta, self.config.eta))
            })
            .collect();
        let result = self.run_cells(&cells)?;
        let critical = self
            .config
            .samples
            .iter()
            .map(|&n| {
                let row: Vec<&CellSummary> = result.cells.iter().filter(|c| c.n_samples == n).collect();
                CriticalSigma {
                    n_samples: n,
                    sigma: critical_sigma(&row, self.config.threshold),
                }
            })
            .collect();
        Ok((result, critical))
    }

    /// Heat map over (beta, eta_eff) for each grid sigma, with
    /// `eta = eta_eff * beta`.
    pub fn sweep_grid(&self) -> Result<SweepResult> {
        let g = &self.config.grid;
        if g.betas.is_empty() || g.eta_effs.is_empty() || g.sigmas.is_empty() {
            return Err(Error::Config("hyperparameter grid is empty".into()));
        }
        let n = self.config.samples.first().copied().unwrap_or(1);
        let mut cells = Vec::new();
        for &sigma in &g.sigmas {
            for &beta in &g.betas {
                for &eta_eff in &g.eta_effs {
                    cells.push(self.config.settings(sigma, n, beta, eta_eff * beta));
                }
            }
        }
        self.run_cells(&cells)
    }
}
