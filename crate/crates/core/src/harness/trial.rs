use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{encode_batch, EpochStream, LabeledDataset};
use crate::dynamics::{predictions, BatchState, Circuit};
use crate::error::Result;
use crate::harness::config::TrialSettings;
use crate::learning::{NoiseModel, RunningMetrics, Trainer, UpdateConfig};
use crate::netcore::{init_params, NetworkParams};
use crate::rng::{derive_seed, domain};

pub const SCHEMA_VERSION: u32 = 1;

/// Rows per chunk when evaluating a test set.
const EVAL_CHUNK: usize = 500;

/// One test-set evaluation during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: u64,
    /// Mean free-phase loss over the iterations since the previous point;
    /// absent for the initial evaluation.
    pub train_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: f64,
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub trial: usize,
    pub seed: u64,
    pub settings: TrialSettings,
    pub series: Vec<EvalPoint>,
    pub final_accuracy: f64,
    pub max_accuracy: f64,
    pub converged: bool,
    /// Set when training stopped on a numerical failure.
    pub error: Option<String>,
}

/// Seed of trial `index` under `base`.
pub fn trial_seed(base: u64, index: usize) -> u64 {
    derive_seed(base, &[domain::TRIAL, index as u64])
}

/// Argmax accuracy of free-phase outputs on `dataset`, noise-free.
pub fn evaluate_accuracy(
    params: &NetworkParams,
    dataset: &LabeledDataset,
    gamma: f64,
    steps: usize,
) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let circuit = Circuit::new(params);
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let batch = encode_batch(dataset, chunk, gamma)?;
        let start = BatchState::clamped(params.spec(), batch.inputs.view())?;
        let out = circuit.relax_batch(&start, 0.0, None, steps)?;
        correct += predictions(out.state.output())
            .iter()
            .zip(chunk)
            .filter(|(p, &k)| **p == usize::from(dataset.labels()[k]))
            .count();
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Free-phase output voltages for every example (used by `eval`).
pub fn output_voltages(
    params: &NetworkParams,
    dataset: &LabeledDataset,
    gamma: f64,
    steps: usize,
) -> Result<Array2<f64>> {
    let circuit = Circuit::new(params);
    let mut out = Array2::zeros((dataset.len(), params.spec().output_width()));
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for (c, chunk) in indices.chunks(EVAL_CHUNK).enumerate() {
        let batch = encode_batch(dataset, chunk, gamma)?;
        let start = BatchState::clamped(params.spec(), batch.inputs.view())?;
        let relaxed = circuit.relax_batch(&start, 0.0, None, steps)?;
        out.slice_mut(ndarray::s![c * EVAL_CHUNK..c * EVAL_CHUNK + chunk.len(), ..])
            .assign(relaxed.state.output());
    }
    Ok(out)
}

/// Trains one network and records its test accuracy every
/// `settings.eval_interval` iterations (and at iteration 0 and at the end).
/// Numerical failures end the run early and are recorded, not returned.
pub fn run_trial(
    settings: &TrialSettings,
    trial: usize,
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<(TrialRecord, NetworkParams)> {
    let seed = trial_seed(settings.base_seed, trial);
    let params = init_params(&settings.layers, seed, settings.init)?;
    let cfg = UpdateConfig::new(settings.eta, settings.beta, settings.batch_size)?;
    let noise = NoiseModel::new(settings.sigma, settings.n_samples, seed)?;
    let mut trainer = Trainer::new(params, cfg, noise, settings.relaxation_steps).with_g_min(settings.g_min);
    let mut stream = EpochStream::new(train, settings.batch_size, settings.gamma, seed)?;

    let mut series = Vec::new();
    let mut error = None;
    let initial = evaluate_accuracy(trainer.params(), test, settings.gamma, settings.relaxation_steps)?;
    series.push(EvalPoint {
        iteration: 0,
        train_loss: None,
        train_accuracy: None,
        test_accuracy: initial,
    });

    let mut done = 0u64;
    while done < settings.iterations {
        let chunk = settings.eval_interval.min(settings.iterations - done);
        let metrics: RunningMetrics = match trainer.train(&mut stream, chunk) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("trial {trial} (sigma {:e}) stopped: {e}", settings.sigma);
                error = Some(e.to_string());
                break;
            }
        };
        done += chunk;
        let acc = match evaluate_accuracy(trainer.params(), test, settings.gamma, settings.relaxation_steps) {
            Ok(a) => a,
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        };
        log::info!(
            "trial {trial} sigma {:e} N {} beta {} eta {}: iter {done} loss {:.4} train acc {:.4} test acc {:.4}",
            settings.sigma,
            settings.n_samples,
            settings.beta,
            settings.eta,
            metrics.mean_loss(),
            metrics.accuracy(),
            acc
        );
        series.push(EvalPoint {
            iteration: done,
            train_loss: Some(metrics.mean_loss()),
            train_accuracy: Some(metrics.accuracy()),
            test_accuracy: acc,
        });
    }

    let final_accuracy = series.last().map_or(0.0, |p| p.test_accuracy);
    let max_accuracy = series.iter().map(|p| p.test_accuracy).fold(0.0, f64::max);
    let record = TrialRecord {
        schema_version: SCHEMA_VERSION,
        trial,
        seed,
        settings: settings.clone(),
        series,
        final_accuracy,
        max_accuracy,
        converged: max_accuracy >= settings.threshold,
        error,
    };
    Ok((record, trainer.into_params()))
}
