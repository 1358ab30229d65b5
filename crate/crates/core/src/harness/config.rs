use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{InitScheme, LayerSpec};

/// Default convergence threshold per dataset. The MNIST value is the 90%
/// line used for critical-noise analysis; the others sit between the
/// failed-run accuracy bands and the best reported accuracies.
pub fn default_threshold(dataset: &str) -> f64 {
    match dataset {
        "kmnist" => 0.80,
        "fashion-mnist" | "fmnist" => 0.75,
        _ => 0.90,
    }
}

/// `per_decade` points per decade from `lo` to `hi`, both included.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    let steps = ((b - a) * per_decade as f64).round() as usize;
    (0..=steps)
        .map(|k| {
            let e = a + (b - a) * k as f64 / steps.max(1) as f64;
            // round to 12 significant digits so grid points print cleanly
            let v = 10f64.powf(e);
            format!("{v:.11e}").parse().unwrap_or(v)
        })
        .collect()
}

/// Hyperparameter grid for the (beta, eta_eff) heat maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub betas: Vec<f64>,
    pub eta_effs: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            betas: vec![1e-3, 1e-2, 1e-1, 1.0, 10.0],
            eta_effs: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            sigmas: vec![0.0, 1e-5, 1e-4, 1e-3],
        }
    }
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub layers: LayerSpec,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub relaxation_steps: usize,
    pub batch_size: usize,
    /// Parameter updates per trial.
    pub iterations: u64,
    pub sigmas: Vec<f64>,
    pub samples: Vec<usize>,
    pub grid: GridSpec,
    pub trials: usize,
    pub base_seed: u64,
    /// Fraction of test accuracy a trial must reach to count as converged.
    pub threshold: f64,
    /// Iterations between test-set evaluations.
    pub eval_interval: u64,
    pub init: InitScheme,
    pub g_min: f64,
    /// Train on the first `n` training examples only.
    pub train_subset: Option<usize>,
    /// Evaluate on the first `n` test examples only.
    pub test_subset: Option<usize>,
    /// Dataset root; falls back to `EPROP_DATA_DIR`.
    pub data_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "mnist".into(),
            layers: LayerSpec::new(vec![1568, 1024, 10]).expect("valid"),
            beta: 1.0,
            eta: 1e-3,
            gamma: 500.0,
            relaxation_steps: 5,
            batch_size: 4,
            iterations: 150_000,
            sigmas: log_grid(1e-7, 1e-3, 4),
            samples: vec![1],
            grid: GridSpec::default(),
            trials: 30,
            base_seed: 0,
            threshold: 0.9,
            eval_interval: 2500,
            init: InitScheme::default(),
            g_min: 0.0,
            train_subset: None,
            test_subset: None,
            data_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn data_root(&self) -> Option<PathBuf> {
        self.data_dir.clone().or_else(crate::data::data_dir_from_env)
    }

    /// Checks everything a single trial needs. A zero iteration budget is
    /// allowed here (it yields the initial evaluation only).
    pub fn validate_trial(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials < 1 {
            return bad("trial count must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} is not in (0, 1)", self.threshold));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1".into());
        }
        if self.eval_interval < 1 {
            return bad("evaluation interval must be at least 1".into());
        }
        if !(self.g_min >= 0.0) {
            return bad(format!("g_min must be non-negative, got {}", self.g_min));
        }
        if self.layers.input_width() != 2 * crate::data::IMAGE_PIXELS
            || self.layers.output_width() != crate::data::NUM_CLASSES
        {
            return bad(format!(
                "layers {:?} must start at {} and end at {}",
                self.layers.sizes(),
                2 * crate::data::IMAGE_PIXELS,
                crate::data::NUM_CLASSES
            ));
        }
        if self.sigmas.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return bad("sigmas must be finite and non-negative".into());
        }
        if self.samples.iter().any(|&n| n < 1) {
            return bad("sample counts must be at least 1".into());
        }
        let g = &self.grid;
        if g.betas.iter().chain(&g.eta_effs).any(|&v| !(v > 0.0 && v.is_finite())) {
            return bad("grid betas and eta_effs must be positive".into());
        }
        if g.sigmas.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return bad("grid sigmas must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_trial()?;
        if self.iterations < 1 {
            return Err(Error::Config("iteration budget must be at least 1".into()));
        }
        Ok(())
    }

    /// Resolved settings of one trial cell.
    pub fn settings(&self, sigma: f64, n_samples: usize, beta: f64, eta: f64) -> TrialSettings {
        TrialSettings {
            dataset: self.dataset.clone(),
            layers: self.layers.clone(),
            beta,
            eta,
            gamma: self.gamma,
            relaxation_steps: self.relaxation_steps,
            batch_size: self.batch_size,
            iterations: self.iterations,
            sigma,
            n_samples,
            threshold: self.threshold,
            eval_interval: self.eval_interval,
            init: self.init,
            g_min: self.g_min,
            train_subset: self.train_subset,
            test_subset: self.test_subset,
            base_seed: self.base_seed,
        }
    }
}

/// Hyperparameters of a single trial, stored with its record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSettings {
    pub dataset: String,
    pub layers: LayerSpec,
    pub beta: f64,
    pub eta: f64,
    pub gamma: f64,
    pub relaxation_steps: usize,
    pub batch_size: usize,
    pub iterations: u64,
    pub sigma: f64,
    pub n_samples: usize,
    pub threshold: f64,
    pub eval_interval: u64,
    pub init: InitScheme,
    pub g_min: f64,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub base_seed: u64,
}

impl TrialSettings {
    pub fn eta_eff(&self) -> f64 {
        self.eta / self.beta
    }
}
